"""
Containers shared by the calculus and simulation layers: sample matrices,
finite joint laws of tail vectors, and estimates with standard errors.
"""

import json
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pandas as pd

from config import WEIGHT_TOLERANCE, CSV_FLOAT_FORMAT, ATOM_MATCH_RTOL
from modules.calculus.increments import Discrete
from modules.errors import ConfigError

logger = logging.getLogger(__name__)


class Estimate(NamedTuple):
    value: float
    se: float

    def to_dict(self) -> dict:
        return {"value": float(self.value), "se": float(self.se)}


@dataclass(frozen=True)
class SampleMatrix:
    """n x |V| array of nonnegative draws; column k belongs to columns[k]."""

    values: np.ndarray
    columns: tuple[str, ...]

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != len(self.columns):
            raise ConfigError(f"sample matrix of shape {arr.shape} does not match "
                              f"{len(self.columns)} columns", "sample matrix")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def index(self, v: str) -> int:
        try:
            return self.columns.index(v)
        except ValueError:
            raise ConfigError(f"unknown column {v!r}", "sample matrix") from None

    def column(self, v: str) -> np.ndarray:
        return self.values[:, self.index(v)]

    def rows(self, mask) -> "SampleMatrix":
        return SampleMatrix(self.values[mask], self.columns)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, columns=list(self.columns))

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT,
                               lineterminator="\n")
        logger.info(f"[Output] Wrote {self.n} x {len(self.columns)} samples to {path}")


@dataclass(frozen=True)
class DiscreteLaw:
    """
    Finite joint law of a tail vector: atoms[k] (ordered like ``columns``)
    carries probability probs[k]. Atoms are distinct and sorted.
    """

    columns: tuple[str, ...]
    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float).reshape(-1, len(self.columns))
        probs = np.asarray(self.probs, dtype=float)
        if atoms.shape[0] != probs.size:
            raise ConfigError("atom and probability counts differ", "discrete law")
        if abs(probs.sum() - 1.0) > WEIGHT_TOLERANCE * max(1, probs.size):
            raise ConfigError(f"probabilities sum to {probs.sum()!r}", "discrete law")
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def merged(cls, columns, atoms, probs) -> "DiscreteLaw":
        """Merge exactly equal atom vectors and drop zero-probability atoms."""
        atoms = np.asarray(atoms, dtype=float).reshape(-1, len(columns))
        probs = np.asarray(probs, dtype=float)
        keep = probs > 0.0
        uniq, inverse = np.unique(atoms[keep], axis=0, return_inverse=True)
        merged = np.bincount(inverse.ravel(), weights=probs[keep], minlength=uniq.shape[0])
        return cls(tuple(columns), uniq, merged)

    def __len__(self) -> int:
        return self.probs.size

    def index(self, v: str) -> int:
        try:
            return self.columns.index(v)
        except ValueError:
            raise ConfigError(f"unknown column {v!r}", "discrete law") from None

    def marginal(self, v: str) -> Discrete:
        return Discrete(self.atoms[:, self.index(v)], self.probs, normalize=True)

    def probability_of(self, theta, rtol: float = ATOM_MATCH_RTOL) -> float:
        """
        Probability of one atom vector (0 when absent). Coordinates match
        within relative tolerance ``rtol``, so a vector built by plain
        products finds the atom enumerated through logs.
        """
        target = np.asarray(theta, dtype=float)
        hit = np.all(np.isclose(self.atoms, target, rtol=rtol, atol=0.0), axis=1)
        return float(self.probs[hit].sum())

    def to_records(self) -> list[dict]:
        return [{"theta": [float(x) for x in a], "p": float(p)}
                for a, p in zip(self.atoms, self.probs)]

    def to_json(self) -> str:
        return json.dumps({"columns": list(self.columns), "atoms": self.to_records()},
                          sort_keys=True, indent=2)
