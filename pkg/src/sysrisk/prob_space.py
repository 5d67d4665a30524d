"""Finite probability spaces, partitions, and conditional expectation.

Everything conditional in this package is evaluated on a finite set of
atoms indexed 0..n-1.  A sub-sigma-algebra is represented by the
partition of atoms that generates it; a random variable is a length-n
float array, a random vector an (n, d) array.  All objects are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams, ZeroBlockMass

#: absolute tolerance for probability normalization and constancy checks
ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class FiniteProbSpace:
    """A finite sample space given by strictly positive atom weights summing to 1."""

    probs: np.ndarray

    def __eq__(self, other):
        return isinstance(other, FiniteProbSpace) and np.array_equal(
            self.probs, other.probs
        )

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidParams("probs must be a non-empty 1-d array")
        if not np.all(np.isfinite(p)):
            raise InvalidParams("probs must be finite")
        if np.any(p <= 0.0):
            raise InvalidParams("every atom weight must be strictly positive")
        if abs(float(p.sum()) - 1.0) > ATOL:
            raise InvalidParams(f"probs sum to {p.sum()!r}, not 1 within {ATOL}")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n_atoms: int) -> "FiniteProbSpace":
        return cls(np.full(n_atoms, 1.0 / n_atoms))

    @property
    def n_atoms(self) -> int:
        return self.probs.size

    def expectation(self, F) -> float:
        F = np.asarray(F, dtype=float)
        return float(self.probs @ F)

    def to_json(self) -> dict:
        return {"probs": self.probs.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "FiniteProbSpace":
        return cls(np.asarray(doc["probs"], dtype=float))


@dataclass(frozen=True)
class Partition:
    """A disjoint cover of the atom set; blocks are stored sorted for canonical equality."""

    blocks: tuple
    n_atoms: int

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(i) for i in b)) for b in self.blocks)
        blocks = tuple(sorted(blocks))
        seen: set[int] = set()
        for b in blocks:
            if not b:
                raise InvalidParams("partition blocks must be non-empty")
            if seen.intersection(b):
                raise InvalidParams("partition blocks must be disjoint")
            seen.update(b)
        if seen != set(range(self.n_atoms)):
            raise InvalidParams("partition blocks must cover atoms 0..n-1 exactly")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def trivial(cls, n_atoms: int) -> "Partition":
        return cls((tuple(range(n_atoms)),), n_atoms)

    @classmethod
    def discrete(cls, n_atoms: int) -> "Partition":
        return cls(tuple((i,) for i in range(n_atoms)), n_atoms)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def block_of(self, atom: int) -> tuple:
        for b in self.blocks:
            if atom in b:
                return b
        raise InvalidParams(f"atom {atom} outside this partition")

    def refines(self, other: "Partition") -> bool:
        """True iff every block of self lies inside a single block of other."""
        if self.n_atoms != other.n_atoms:
            return False
        owner = np.empty(self.n_atoms, dtype=int)
        for k, b in enumerate(other.blocks):
            owner[list(b)] = k
        return all(len(set(owner[list(b)])) == 1 for b in self.blocks)

    def labels(self) -> np.ndarray:
        """Block index per atom."""
        lab = np.empty(self.n_atoms, dtype=int)
        for k, b in enumerate(self.blocks):
            lab[list(b)] = k
        return lab

    def to_json(self) -> dict:
        return {"blocks": [list(b) for b in self.blocks]}

    @classmethod
    def from_json(cls, doc: dict, n_atoms: int) -> "Partition":
        return cls(tuple(tuple(b) for b in doc["blocks"]), n_atoms)


@dataclass(frozen=True, eq=False)
class RandomVector:
    """An atoms-by-d matrix of monetary profits/losses; column i belongs to institution i."""

    values: np.ndarray

    def __eq__(self, other):
        return isinstance(other, RandomVector) and np.array_equal(
            self.values, other.values
        )

    def __hash__(self):
        return hash((self.values.shape, self.values.tobytes()))

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.size == 0:
            raise InvalidParams("values must be an (atoms, d) matrix")
        if not np.all(np.isfinite(v)):
            raise InvalidParams("values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n_atoms(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def dump_space_vector(space: FiniteProbSpace, values) -> dict:
    """Serialize a space together with a random vector on it."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != space.n_atoms:
        raise InvalidParams("values and space disagree on the number of atoms")
    return {"probs": space.probs.tolist(), "values": v.tolist()}


def load_space_vector(doc: dict) -> tuple[FiniteProbSpace, np.ndarray]:
    """Inverse of :func:`dump_space_vector`; returns (space, (atoms, d) array)."""
    space = FiniteProbSpace(np.asarray(doc["probs"], dtype=float))
    values = np.asarray(doc["values"], dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != space.n_atoms:
        raise InvalidParams("values rows must match the number of atoms")
    if not np.all(np.isfinite(values)):
        raise InvalidParams("values must be finite")
    return space, values


def sigma_of_event(space: FiniteProbSpace, event) -> Partition:
    """Partition generated by one event: {A, complement}, trivial if A is empty or full."""
    n = space.n_atoms
    ev = sorted(set(int(i) for i in event))
    if any(i < 0 or i >= n for i in ev):
        raise InvalidParams("event contains atom indices outside the space")
    comp = sorted(set(range(n)) - set(ev))
    if not ev or not comp:
        return Partition.trivial(n)
    return Partition((tuple(ev), tuple(comp)), n)


def is_measurable(F, G: Partition, atol: float = ATOL) -> bool:
    """True iff F is constant (within atol) on every block of G."""
    F = np.asarray(F, dtype=float)
    return all(
        float(np.ptp(F[list(b)])) <= atol if len(b) > 1 else True for b in G.blocks
    )


def conditional_expectation(
    space: FiniteProbSpace, F, G: Partition, density=None
) -> np.ndarray:
    """Blockwise weighted average of F, optionally under a change of measure.

    The value on block B is  sum_B p*den*F / sum_B p*den.  ``density`` is
    the Radon-Nikodym derivative dQ/dP (nonnegative, P-expectation 1); it
    must put positive mass on every block.
    """
    F = np.asarray(F, dtype=float)
    if F.shape != (space.n_atoms,):
        raise InvalidParams("F must be a random variable on the space")
    if density is None:
        w = space.probs
    else:
        den = np.asarray(density, dtype=float)
        if den.shape != (space.n_atoms,):
            raise InvalidParams("density must be a random variable on the space")
        if np.any(den < 0):
            raise InvalidParams("density must be nonnegative")
        if abs(space.expectation(den) - 1.0) > 1e-9:
            raise InvalidParams("density must have P-expectation 1")
        w = space.probs * den
    out = np.empty(space.n_atoms)
    for b in G.blocks:
        idx = list(b)
        mass = float(w[idx].sum())
        if mass <= 0.0:
            raise ZeroBlockMass(f"block {b} has zero mass under the density")
        out[idx] = float(w[idx] @ F[idx]) / mass
    return out
