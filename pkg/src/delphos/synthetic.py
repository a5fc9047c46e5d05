"""Simulated choice datasets with known data-generating processes.

Three built-in cases (S1-S3) of increasing complexity: 4,000 decision
makers choosing among 3 alternatives described by six attributes, with
socio-demographic covariates entering only in S3. Attribute levels are
drawn iid Uniform(0.5, 4.5), keeping every transformation's domain
valid; choices follow utility maximisation under standard Gumbel noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ChoiceDataset
from .estimator import build_design, utilities
from .space import GENERIC, SPECIFIC, AscTerm, AttrTerm, ModellingSpace, ModelSpec
from .transforms import BOXCOX, LINEAR, LOG1P, TRANSFORMS

ATTR_LOW, ATTR_HIGH = 0.5, 4.5
N_ALTS = 3


@dataclass(frozen=True)
class TrueCase:
    """A modelling space together with the spec and parameters that generated
    the data; the spec always lies inside the space."""

    case_id: str
    space: ModellingSpace
    spec: ModelSpec
    params: dict[str, float]
    cov_levels: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "case": self.case_id,
            "space": self.space.to_json(),
            "spec": self.spec.to_json(),
            "params": dict(self.params),
            "cov_levels": list(self.cov_levels),
        }


def case_catalogue() -> list[TrueCase]:
    """The three built-in simulated cases."""
    s1 = TrueCase(
        case_id="S1",
        space=ModellingSpace(n_attrs=6, asc_enabled=True, transforms=TRANSFORMS,
                             tastes=(GENERIC,), covariates=()),
        spec=ModelSpec(
            asc=AscTerm(),
            terms=(
                AttrTerm(0, LINEAR, GENERIC),
                AttrTerm(1, LOG1P, GENERIC),
                AttrTerm(2, LINEAR, GENERIC),
                AttrTerm(3, BOXCOX, GENERIC),
                AttrTerm(4, LINEAR, GENERIC),
            ),
        ),
        params={
            "asc_1": -0.95,
            "asc_2": 0.84,
            "b_x1": -0.72,
            "b_x2": 0.83,
            "b_x3": 1.77,
            "b_x4": 1.01,
            "lambda_x4": 0.20,
            "b_x5": 1.90,
        },
    )
    s2 = TrueCase(
        case_id="S2",
        space=ModellingSpace(n_attrs=6, asc_enabled=True, transforms=TRANSFORMS,
                             tastes=(GENERIC, SPECIFIC), covariates=()),
        spec=ModelSpec(
            asc=AscTerm(),
            terms=(
                AttrTerm(0, LOG1P, SPECIFIC),
                AttrTerm(1, BOXCOX, GENERIC),
                AttrTerm(2, LINEAR, SPECIFIC),
                AttrTerm(3, LINEAR, GENERIC),
            ),
        ),
        params={
            "asc_1": -0.95,
            "asc_2": 0.84,
            "b_x1_a0": -1.65,
            "b_x1_a1": -1.65,
            "b_x1_a2": -1.65,
            "b_x2": -1.33,
            "lambda_x2": 0.64,
            "b_x3_a0": 0.57,
            "b_x3_a1": 0.57,
            "b_x3_a2": 0.57,
            "b_x4": 0.92,
        },
    )
    s3 = TrueCase(
        case_id="S3",
        space=ModellingSpace(n_attrs=6, asc_enabled=True, transforms=TRANSFORMS,
                             tastes=(GENERIC, SPECIFIC), covariates=(0, 1)),
        spec=ModelSpec(
            asc=AscTerm(interaction=0),
            terms=(
                AttrTerm(0, LINEAR, SPECIFIC),
                AttrTerm(1, LOG1P, SPECIFIC, interaction=1),
                AttrTerm(2, LINEAR, GENERIC),
                AttrTerm(3, BOXCOX, GENERIC),
                AttrTerm(4, LINEAR, GENERIC),
            ),
        ),
        params={
            "asc_1_c0": -0.90,
            "asc_1_c1": 0.43,
            "asc_2_c0": -0.83,
            "asc_2_c1": 0.43,
            "b_x1_a0": -0.50,
            "b_x1_a1": -0.40,
            "b_x1_a2": -0.60,
            "b_x2_a0_c0": -1.40,
            "b_x2_a0_c1": -0.97,
            "b_x2_a0_c2": -0.06,
            "b_x2_a1_c0": -1.16,
            "b_x2_a1_c1": -0.85,
            "b_x2_a1_c2": -0.15,
            "b_x2_a2_c0": -1.15,
            "b_x2_a2_c1": -0.65,
            "b_x2_a2_c2": -0.09,
            "b_x3": -1.40,
            "b_x4": 1.70,
            "lambda_x4": 0.09,
            "b_x5": 1.90,
        },
        cov_levels=(2, 3),
    )
    return [s1, s2, s3]


def get_case(case_id: str) -> TrueCase:
    for case in case_catalogue():
        if case.case_id.lower() == case_id.lower():
            return case
    raise KeyError(f"unknown case {case_id!r}; choose from S1, S2, S3")


def gumbel_noise(rng: np.random.Generator, size) -> np.ndarray:
    """Standard Gumbel draws (mean Euler-Mascheroni, variance pi^2/6)."""
    return rng.gumbel(size=size)


def true_param_vector(case: TrueCase, ds: ChoiceDataset) -> np.ndarray:
    """Parameters ordered by the design layout of the true specification."""
    design = build_design(case.spec, case.space, ds)
    missing = set(design.param_names) - set(case.params)
    extra = set(case.params) - set(design.param_names)
    if missing or extra:
        raise ValueError(
            f"case {case.case_id} parameters do not match the design layout: "
            f"missing {sorted(missing)}, extra {sorted(extra)}"
        )
    return np.array([case.params[name] for name in design.param_names])


def generate(case: TrueCase, n: int, seed: int) -> tuple[ChoiceDataset, dict]:
    """Draw a dataset from the case's data-generating process.

    Returns the dataset and a truth record (spec, parameters, seed, input
    distributions) that makes downstream recovery experiments
    self-contained.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    attrs = rng.uniform(ATTR_LOW, ATTR_HIGH, size=(n, N_ALTS, case.space.n_attrs))
    covs = np.zeros((n, len(case.cov_levels)), dtype=int)
    for c, levels in enumerate(case.cov_levels):
        covs[:, c] = rng.integers(0, levels, size=n)

    provisional = ChoiceDataset(
        attrs=attrs,
        covs=covs,
        cov_levels=case.cov_levels,
        choice=np.zeros(n, dtype=int),
        avail=np.ones((n, N_ALTS), dtype=bool),
    )
    design = build_design(case.spec, case.space, provisional)
    v = utilities(design, true_param_vector(case, provisional))
    noise = gumbel_noise(rng, (n, N_ALTS))
    choice = np.argmax(v + noise, axis=1)

    ds = ChoiceDataset(
        attrs=attrs.copy(),
        covs=covs.copy(),
        cov_levels=case.cov_levels,
        choice=choice,
        avail=np.ones((n, N_ALTS), dtype=bool),
    )
    truth = {
        **case.to_json(),
        "n": n,
        "seed": seed,
        "n_alts": N_ALTS,
        "distributions": {
            "attributes": f"iid uniform({ATTR_LOW}, {ATTR_HIGH}) per observation x alternative",
            "covariates": [f"uniform over {{0..{levels - 1}}}" for levels in case.cov_levels],
            "noise": "iid standard Gumbel",
        },
    }
    return ds, truth
