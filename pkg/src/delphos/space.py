"""The feasible specification universe and its MDP view.

A specification is a set of modelling terms: per attribute a
(transform, taste, covariate-interaction) tuple, plus optional
alternative-specific constants. Actions add a term, change an existing
term's tuple, toggle the constants, or terminate the episode. Invalid
actions (duplicates, no-op changes, edits to absent terms) are masked.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .transforms import TRANSFORMS

GENERIC = "generic"
SPECIFIC = "specific"
TASTES = (GENERIC, SPECIFIC)

TERMINATE = "terminate"
ADD = "add"
CHANGE = "change"
ADD_ASC = "add_asc"
CHANGE_ASC = "change_asc"


class InvalidActionError(ValueError):
    """An action was applied without consulting the validity mask."""


@dataclass(frozen=True)
class ModellingSpace:
    """Menus the agent may draw from; fixes action ids and encoding width."""

    n_attrs: int
    asc_enabled: bool = True
    transforms: tuple[str, ...] = TRANSFORMS
    tastes: tuple[str, ...] = (GENERIC,)
    covariates: tuple[int, ...] = ()
    max_steps: int = 0  # 0 -> default cap 4*n_attrs + 4

    def __post_init__(self):
        if self.n_attrs < 1:
            raise ValueError("need at least one attribute")
        if not self.transforms or any(t not in TRANSFORMS for t in self.transforms):
            raise ValueError(f"transforms must be a nonempty subset of {TRANSFORMS}")
        if not self.tastes or any(g not in TASTES for g in self.tastes):
            raise ValueError(f"tastes must be a nonempty subset of {TASTES}")
        if self.max_steps == 0:
            object.__setattr__(self, "max_steps", 4 * self.n_attrs + 4)

    @property
    def interaction_options(self) -> tuple[int | None, ...]:
        return (None, *self.covariates)

    def to_json(self) -> dict:
        return {
            "n_attrs": self.n_attrs,
            "asc_enabled": self.asc_enabled,
            "transforms": list(self.transforms),
            "tastes": list(self.tastes),
            "covariates": list(self.covariates),
            "max_steps": self.max_steps,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ModellingSpace":
        return cls(
            n_attrs=int(doc["n_attrs"]),
            asc_enabled=bool(doc.get("asc_enabled", True)),
            transforms=tuple(doc.get("transforms", TRANSFORMS)),
            tastes=tuple(doc.get("tastes", (GENERIC,))),
            covariates=tuple(int(c) for c in doc.get("covariates", ())),
            max_steps=int(doc.get("max_steps", 0)),
        )


@dataclass(frozen=True)
class AttrTerm:
    attr: int
    transform: str
    taste: str
    interaction: int | None = None

    def components(self):
        return (self.transform, self.taste, self.interaction)


@dataclass(frozen=True)
class AscTerm:
    interaction: int | None = None


@dataclass(frozen=True)
class ModelSpec:
    """An (intermediate or terminal) specification: a set of terms."""

    asc: AscTerm | None = None
    terms: tuple[AttrTerm, ...] = ()  # kept sorted by attribute index

    def __post_init__(self):
        attrs = [t.attr for t in self.terms]
        if len(set(attrs)) != len(attrs):
            raise ValueError("duplicate attribute in specification")
        if attrs != sorted(attrs):
            object.__setattr__(self, "terms", tuple(sorted(self.terms, key=lambda t: t.attr)))

    @property
    def empty(self) -> bool:
        return self.asc is None and not self.terms

    def term_for(self, attr: int) -> AttrTerm | None:
        for t in self.terms:
            if t.attr == attr:
                return t
        return None

    def with_term(self, term: AttrTerm) -> "ModelSpec":
        kept = tuple(t for t in self.terms if t.attr != term.attr)
        return replace(self, terms=kept + (term,))

    def to_json(self) -> dict:
        return {
            "asc": None if self.asc is None else {"interaction": self.asc.interaction},
            "terms": [
                {
                    "attr": t.attr,
                    "transform": t.transform,
                    "taste": t.taste,
                    "interaction": t.interaction,
                }
                for t in self.terms
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ModelSpec":
        asc = doc.get("asc")
        return cls(
            asc=None if asc is None else AscTerm(interaction=asc.get("interaction")),
            terms=tuple(
                AttrTerm(
                    attr=int(t["attr"]),
                    transform=t["transform"],
                    taste=t.get("taste", GENERIC),
                    interaction=t.get("interaction"),
                )
                for t in doc.get("terms", [])
            ),
        )


EMPTY_SPEC = ModelSpec()


@dataclass(frozen=True)
class ActionDescriptor:
    op: str
    attr: int | None = None
    transform: str | None = None
    taste: str | None = None
    interaction: int | None = None
    id: int = field(default=-1, compare=False)

    def label(self) -> str:
        if self.op == TERMINATE:
            return "terminate"
        if self.op in (ADD_ASC, CHANGE_ASC):
            tail = "" if self.interaction is None else f",cov{self.interaction}"
            return f"({self.op}{tail})"
        tail = "" if self.interaction is None else f",cov{self.interaction}"
        return f"({self.op},x{self.attr + 1},{self.transform},{self.taste}{tail})"


def enumerate_actions(space: ModellingSpace) -> list[ActionDescriptor]:
    """Fixed action list: terminate, ASC ops, then per-attribute add/change.

    Attribute actions run in (attr, op, transform, taste, interaction)
    lexicographic order, so ids are stable for a given space.
    """
    actions = [ActionDescriptor(op=TERMINATE, id=0)]
    if space.asc_enabled:
        actions.append(ActionDescriptor(op=ADD_ASC, interaction=None, id=len(actions)))
        for cov in space.interaction_options:
            actions.append(ActionDescriptor(op=CHANGE_ASC, interaction=cov, id=len(actions)))
    for attr in range(space.n_attrs):
        for op in (ADD, CHANGE):
            for tr, taste, cov in itertools.product(
                space.transforms, space.tastes, space.interaction_options
            ):
                actions.append(
                    ActionDescriptor(
                        op=op, attr=attr, transform=tr, taste=taste,
                        interaction=cov, id=len(actions),
                    )
                )
    return actions


def validate_spec(space: ModellingSpace, spec: ModelSpec) -> None:
    """Raise ValueError if the spec uses components outside the space's menus."""
    if spec.asc is not None:
        if not space.asc_enabled:
            raise ValueError("spec has constants but the space disables them")
        if spec.asc.interaction is not None and spec.asc.interaction not in space.covariates:
            raise ValueError(f"ASC interaction cov{spec.asc.interaction} outside the space")
    for t in spec.terms:
        if not 0 <= t.attr < space.n_attrs:
            raise ValueError(f"attribute index {t.attr} outside the space")
        if t.transform not in space.transforms:
            raise ValueError(f"transform {t.transform!r} not in the space for x{t.attr + 1}")
        if t.taste not in space.tastes:
            raise ValueError(f"taste {t.taste!r} not in the space for x{t.attr + 1}")
        if t.interaction is not None and t.interaction not in space.covariates:
            raise ValueError(f"interaction cov{t.interaction} outside the space")


def valid_mask(space: ModellingSpace, state: ModelSpec) -> np.ndarray:
    """Boolean validity per enumerated action for the given state."""
    actions = enumerate_actions(space)
    mask = np.zeros(len(actions), dtype=bool)
    present = {t.attr: t for t in state.terms}
    for a in actions:
        if a.op == TERMINATE:
            mask[a.id] = not state.empty
        elif a.op == ADD_ASC:
            mask[a.id] = state.asc is None
        elif a.op == CHANGE_ASC:
            mask[a.id] = state.asc is not None and state.asc.interaction != a.interaction
        elif a.op == ADD:
            mask[a.id] = a.attr not in present
        else:  # CHANGE
            cur = present.get(a.attr)
            mask[a.id] = cur is not None and cur.components() != (
                a.transform, a.taste, a.interaction
            )
    return mask


def apply_action(state: ModelSpec, action: ActionDescriptor) -> ModelSpec:
    """Pure transition; the caller must pre-filter with valid_mask."""
    if action.op == TERMINATE:
        if state.empty:
            raise InvalidActionError("terminate on the empty specification")
        return state
    if action.op == ADD_ASC:
        if state.asc is not None:
            raise InvalidActionError("constants already present")
        return replace(state, asc=AscTerm(interaction=action.interaction))
    if action.op == CHANGE_ASC:
        if state.asc is None or state.asc.interaction == action.interaction:
            raise InvalidActionError("invalid ASC change")
        return replace(state, asc=AscTerm(interaction=action.interaction))
    if action.op == ADD:
        if state.term_for(action.attr) is not None:
            raise InvalidActionError(f"attribute x{action.attr + 1} already present")
        return state.with_term(
            AttrTerm(action.attr, action.transform, action.taste, action.interaction)
        )
    if action.op == CHANGE:
        cur = state.term_for(action.attr)
        if cur is None:
            raise InvalidActionError(f"attribute x{action.attr + 1} not present")
        if cur.components() == (action.transform, action.taste, action.interaction):
            raise InvalidActionError("change action is a no-op")
        return state.with_term(
            AttrTerm(action.attr, action.transform, action.taste, action.interaction)
        )
    raise InvalidActionError(f"unknown action op {action.op!r}")


def encoding_length(space: ModellingSpace) -> int:
    n_int = len(space.interaction_options)
    per_attr = (len(space.transforms) + 1) + len(space.tastes) + n_int
    return space.n_attrs * per_attr + (1 + n_int if space.asc_enabled else 0)


def encode_state(space: ModellingSpace, state: ModelSpec) -> np.ndarray:
    """Fixed-length 0/1 vector consumed by the Q-network.

    Per attribute: one-hot over (absent | transforms), one-hot over tastes,
    one-hot over (no interaction | covariates); absent attributes zero out
    the latter two blocks. The ASC block is a presence bit plus an
    interaction one-hot.
    """
    n_int = len(space.interaction_options)
    vec = np.zeros(encoding_length(space))
    per_attr = (len(space.transforms) + 1) + len(space.tastes) + n_int
    present = {t.attr: t for t in state.terms}
    for attr in range(space.n_attrs):
        base = attr * per_attr
        term = present.get(attr)
        if term is None:
            vec[base] = 1.0  # absent slot
            continue
        vec[base + 1 + space.transforms.index(term.transform)] = 1.0
        vec[base + 1 + len(space.transforms) + space.tastes.index(term.taste)] = 1.0
        int_base = base + 1 + len(space.transforms) + len(space.tastes)
        vec[int_base + space.interaction_options.index(term.interaction)] = 1.0
    if space.asc_enabled:
        base = space.n_attrs * per_attr
        if state.asc is not None:
            vec[base] = 1.0
            vec[base + 1 + space.interaction_options.index(state.asc.interaction)] = 1.0
    return vec


def decode_state(space: ModellingSpace, vec: np.ndarray) -> ModelSpec:
    """Inverse of encode_state over valid encodings."""
    n_int = len(space.interaction_options)
    per_attr = (len(space.transforms) + 1) + len(space.tastes) + n_int
    terms = []
    for attr in range(space.n_attrs):
        base = attr * per_attr
        if vec[base] == 1.0:
            continue
        tr = space.transforms[int(np.argmax(vec[base + 1 : base + 1 + len(space.transforms)]))]
        tbase = base + 1 + len(space.transforms)
        taste = space.tastes[int(np.argmax(vec[tbase : tbase + len(space.tastes)]))]
        ibase = tbase + len(space.tastes)
        cov = space.interaction_options[int(np.argmax(vec[ibase : ibase + n_int]))]
        terms.append(AttrTerm(attr, tr, taste, cov))
    asc = None
    if space.asc_enabled:
        base = space.n_attrs * per_attr
        if vec[base] == 1.0:
            asc = AscTerm(space.interaction_options[int(np.argmax(vec[base + 1 : base + 1 + n_int]))])
    return ModelSpec(asc=asc, terms=tuple(terms))


def space_size(space: ModellingSpace) -> int:
    """Count of distinct terminal specifications in the universe."""
    per_attr = 1 + len(space.transforms) * len(space.tastes) * len(space.interaction_options)
    size = per_attr ** space.n_attrs
    if space.asc_enabled:
        size *= 1 + len(space.interaction_options)
    return size


def canonical_key(state: ModelSpec) -> str:
    """Order-insensitive, collision-free serialisation of a specification."""
    parts = []
    if state.asc is not None:
        parts.append("asc" if state.asc.interaction is None else f"asc*cov{state.asc.interaction}")
    for t in state.terms:  # terms are kept sorted by attribute
        tail = "" if t.interaction is None else f"*cov{t.interaction}"
        parts.append(f"x{t.attr + 1}({t.transform},{t.taste}{tail})")
    return "+".join(parts)
