import numpy as np
import pytest

from delphos.dataset import (
    ChoiceDataset,
    CsvSchema,
    DataValidationError,
    SchemaError,
    load_wide_csv,
    save_wide_csv,
    split_holdout,
)
from delphos.synthetic import generate, get_case


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_file_with_schema(tmp_path):
    path = _write(
        tmp_path,
        "choice,x1_alt0,x1_alt1,x1_alt2\n0,1.0,2.0,3.0\n1,0.5,0.5,0.5\n2,2.5,1.5,3.5\n",
    )
    schema = CsvSchema(attrs={"x1": ["x1_alt0", "x1_alt1", "x1_alt2"]})
    ds = load_wide_csv(path, schema)
    assert (ds.n_obs, ds.n_alts, ds.n_attrs) == (3, 3, 1)
    assert ds.choice.tolist() == [0, 1, 2]
    assert ds.avail.all()


def test_default_pattern_autodetect(tmp_path):
    path = _write(
        tmp_path,
        "choice,att1_alt0,att1_alt1,att2_alt0,att2_alt1,cov1\n0,1,2,3,4,7\n1,2,3,4,5,9\n",
    )
    ds = load_wide_csv(path)
    assert (ds.n_obs, ds.n_alts, ds.n_attrs, ds.n_covs) == (2, 2, 2, 1)
    # arbitrary codes {7, 9} densified with the mapping recorded
    assert ds.covs[:, 0].tolist() == [0, 1]
    assert ds.cov_code_maps == ((7, 9),)


def test_unavailable_choice_names_row(tmp_path):
    rows = ["1,1.0,2.0,1,1"] * 5 + ["1,1.0,2.0,1,0"] + ["0,1.0,2.0,1,1"]
    path = _write(
        tmp_path, "choice,att1_alt0,att1_alt1,avail_alt0,avail_alt1\n" + "\n".join(rows) + "\n"
    )
    with pytest.raises(DataValidationError, match="row 5"):
        load_wide_csv(path)


def test_missing_column_is_schema_error(tmp_path):
    path = _write(tmp_path, "selected,att1_alt0,att1_alt1\n0,1,2\n")
    with pytest.raises(SchemaError, match="choice"):
        load_wide_csv(path)


def test_non_numeric_cell_reports_location(tmp_path):
    path = _write(tmp_path, "choice,att1_alt0,att1_alt1\n0,1.0,2.0\n1,oops,2.0\n")
    with pytest.raises(DataValidationError, match="att1_alt0.*row 1"):
        load_wide_csv(path)


def test_fewer_than_two_available(tmp_path):
    path = _write(
        tmp_path,
        "choice,att1_alt0,att1_alt1,avail_alt0,avail_alt1\n0,1.0,2.0,1,0\n",
    )
    with pytest.raises(DataValidationError, match="fewer than 2"):
        load_wide_csv(path)


def test_synthetic_round_trip_bit_identical(tmp_path, s1_small):
    ds, _ = s1_small
    save_wide_csv(ds, tmp_path / "s1.csv")
    back = load_wide_csv(tmp_path / "s1.csv")
    assert back.equals(ds)


def test_round_trip_with_covariates_and_avail(tmp_path):
    ds, _ = generate(get_case("S3"), 120, seed=9)
    # punch out one non-chosen alternative to exercise availability columns
    avail = ds.avail.copy()
    avail[3, (ds.choice[3] + 1) % 3] = False
    ds2 = ChoiceDataset(
        attrs=ds.attrs.copy(), covs=ds.covs.copy(), cov_levels=ds.cov_levels,
        choice=ds.choice.copy(), avail=avail,
    )
    save_wide_csv(ds2, tmp_path / "s3.csv")
    back = load_wide_csv(tmp_path / "s3.csv")
    assert back.equals(ds2)


def test_split_sizes_and_determinism(s1_small):
    ds, _ = s1_small
    small = ds.subset(np.arange(10))
    a_in, a_out = split_holdout(small, 0.8, seed=1)
    assert (a_in.n_obs, a_out.n_obs) == (8, 2)
    b_in, b_out = split_holdout(small, 0.8, seed=1)
    assert a_in.equals(b_in) and a_out.equals(b_out)


def test_split_partition_is_exact():
    ds, _ = generate(get_case("S1"), 4000, seed=2)
    marked = ChoiceDataset(
        attrs=np.tile(np.arange(4000, dtype=float)[:, None, None], (1, 3, 6)) + 0.5,
        covs=ds.covs.copy(), cov_levels=ds.cov_levels,
        choice=ds.choice.copy(), avail=ds.avail.copy(),
    )
    ins, outs = split_holdout(marked, 0.8, seed=3)
    assert (ins.n_obs, outs.n_obs) == (3200, 800)
    ids_in = set((ins.attrs[:, 0, 0] - 0.5).astype(int).tolist())
    ids_out = set((outs.attrs[:, 0, 0] - 0.5).astype(int).tolist())
    assert ids_in.isdisjoint(ids_out)
    assert ids_in | ids_out == set(range(4000))


def test_split_empty_partition_rejected(s1_small):
    ds, _ = s1_small
    tiny = ds.subset(np.arange(3))
    with pytest.raises(ValueError):
        split_holdout(tiny, 0.05, seed=0)
    with pytest.raises(ValueError):
        split_holdout(tiny, 1.5, seed=0)


def test_dataset_is_immutable(s1_small):
    ds, _ = s1_small
    with pytest.raises(ValueError):
        ds.attrs[0, 0, 0] = 99.0
