"""Online adaptive filters over a fixed kernel dictionary.

All filters share the same step shape: compute the a-priori error
``e = d - <alpha, kappa(u)>``, then move the coefficient vector. Steps are
pure state transitions returning a fresh :class:`FilterState`, so independent
Monte-Carlo runs can share the read-only :class:`~kaflab.kernel.GramFactor`
without coordination.

The main algorithm updates along the Gram-preconditioned direction
``G^-1 kappa``, i.e. steepest descent in the function-space metric restricted
to the dictionary span. The selective variant confines each update to the
``s_n`` coordinates whose centers are most coherent with the current input,
solving only the corresponding principal Gram subsystem. The normalized
baseline works in plain coefficient space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .kernel import Dictionary, GaussianKernel, GramFactor, kernelized_input


@dataclass(frozen=True)
class FilterState:
    """Coefficient vector over a dictionary, starting from all zeros."""

    alpha: np.ndarray
    dictionary: Dictionary
    iteration: int = 0

    @classmethod
    def zeros(cls, d: Dictionary) -> "FilterState":
        return cls(alpha=np.zeros(d.size), dictionary=d, iteration=0)

    def __post_init__(self):
        if self.alpha.shape != (self.dictionary.size,):
            raise DimensionMismatchError(
                f"alpha has shape {self.alpha.shape}, dictionary size is "
                f"{self.dictionary.size}"
            )


@dataclass(frozen=True)
class StepRecord:
    """A-priori error and prediction of a single step, before the update."""

    prior_error: float
    prediction: float


def predict(s: FilterState, k: GaussianKernel, u: np.ndarray) -> float:
    """Filter output ``<alpha, kappa(u)>`` at the current state."""
    return float(s.alpha @ kernelized_input(s.dictionary, k, u))


def natural_klms_step(
    s: FilterState,
    gf: GramFactor,
    k: GaussianKernel,
    u: np.ndarray,
    d: float,
    eta: float,
) -> tuple[StepRecord, FilterState]:
    """Full Gram-preconditioned update: ``alpha += eta * e * G^-1 kappa``."""
    if not eta > 0:
        raise ValueError(f"step size must be positive, got {eta}")
    kap = kernelized_input(s.dictionary, k, u)
    pred = float(s.alpha @ kap)
    e = float(d) - pred
    alpha = s.alpha + eta * e * gf.solve(kap)
    return (
        StepRecord(prior_error=e, prediction=pred),
        FilterState(alpha=alpha, dictionary=s.dictionary, iteration=s.iteration + 1),
    )


def select_update_indices(kap: np.ndarray, s_n: int) -> np.ndarray:
    """Indices of the ``s_n`` largest kernel values, ties broken by lowest index.

    Returned in ascending order; a pure function of the inputs, so repeated
    calls with equal inputs select identical sets.
    """
    order = np.argsort(-kap, kind="stable")[:s_n]
    return np.sort(order)


def selective_step(
    s: FilterState,
    gf: GramFactor,
    k: GaussianKernel,
    u: np.ndarray,
    d: float,
    eta: float,
    s_n: int,
) -> tuple[StepRecord, FilterState]:
    """Update only the ``s_n`` coordinates most coherent with the input.

    The prior error still uses the full prediction; the update solves the
    ``s_n x s_n`` principal Gram subsystem, costing O(s_n^3) instead of the
    full solve. With ``s_n`` equal to the dictionary size this reproduces
    :func:`natural_klms_step` exactly.
    """
    if not eta > 0:
        raise ValueError(f"step size must be positive, got {eta}")
    r = s.dictionary.size
    if not 1 <= s_n <= r:
        raise ValueError(f"s_n must lie in [1, {r}], got {s_n}")
    kap = kernelized_input(s.dictionary, k, u)
    pred = float(s.alpha @ kap)
    e = float(d) - pred
    alpha = s.alpha.copy()
    if s_n == r:
        # degenerate selection covers every index; reuse the cached factorization
        alpha += eta * e * gf.solve(kap)
    else:
        idx = select_update_indices(kap, s_n)
        sub = np.linalg.solve(gf.g[np.ix_(idx, idx)], kap[idx])
        alpha[idx] += eta * e * sub
    return (
        StepRecord(prior_error=e, prediction=pred),
        FilterState(alpha=alpha, dictionary=s.dictionary, iteration=s.iteration + 1),
    )


def knlms_step(
    s: FilterState,
    k: GaussianKernel,
    u: np.ndarray,
    d: float,
    eta: float,
    eps_reg: float,
) -> tuple[StepRecord, FilterState]:
    """Normalized baseline in coefficient space: ``alpha += eta e kappa / (eps + ||kappa||^2)``."""
    if not eta > 0:
        raise ValueError(f"step size must be positive, got {eta}")
    if not eps_reg > 0:
        raise ValueError(f"regularizer must be positive, got {eps_reg}")
    kap = kernelized_input(s.dictionary, k, u)
    pred = float(s.alpha @ kap)
    e = float(d) - pred
    alpha = s.alpha + eta * e * kap / (eps_reg + kap @ kap)
    return (
        StepRecord(prior_error=e, prediction=pred),
        FilterState(alpha=alpha, dictionary=s.dictionary, iteration=s.iteration + 1),
    )
