"""Theoretical performance engine for the Gram-preconditioned LMS filter.

Works entirely in the transformed ("tilde") coordinates of a
:class:`~kaflab.moments.MomentModel`. Provides the mean weight-error
recursion and its step-size bound, the transient MSE recursion on the
weight-error correlation matrix, the lexicographic transition matrix K whose
spectral radius decides mean-square stability, and the steady-state MSE from
the linear fixed-point solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import DivergenceError, KaflabError, NotStableError
from .linalg import kron, spectral_radius, sym_eig, symmetrize, unvec_lex, vec_lex
from .moments import MomentModel
from .sim import CurveKind, LearningCurve

# Largest allowed number of rows of the r^2 x r^2 transition matrix.
K_CAP = 10_000


@dataclass(frozen=True)
class TransientState:
    """One step of the transient recursion.

    ``mse`` always equals ``j_min + trace(r_tilde @ c_tilde)`` for the model
    that produced it; ``c_tilde`` is kept exactly symmetric.
    """

    c_tilde: np.ndarray
    n: int
    mse: float


@dataclass(frozen=True)
class KMatrix:
    """Lexicographic transition matrix ``K = I - eta (K1 + K2) + eta^2 K3``.

    ``K1 = I (x) r_tilde``, ``K2 = r_tilde (x) I`` and ``K3`` holds the
    transformed fourth moments, ``K3[l + m r, p + q r] = s_tilde[l, m, p, q]``.
    """

    k: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    k3: np.ndarray
    eta: float


def mean_stability_bound(m: MomentModel) -> float:
    """Supremum of step sizes for which the mean weight error contracts.

    Equals ``2 / lambda_max`` of the transformed autocorrelation matrix.
    """
    eig = sym_eig(m.r_tilde).eigenvalues
    return 2.0 / eig[-1]


def mean_recursion(m: MomentModel, eta: float, v0: np.ndarray, n_steps: int) -> np.ndarray:
    """Trajectory of the mean weight error, ``v_{n+1} = (I - eta r_tilde) v_n``.

    Returns an ``(n_steps + 1, r)`` array whose first row is ``v0``.
    """
    if not eta > 0:
        raise ValueError(f"step size must be positive, got {eta}")
    v0 = np.asarray(v0, dtype=float).ravel()
    a = np.eye(m.dim) - eta * m.r_tilde
    out = np.empty((n_steps + 1, m.dim))
    out[0] = v0
    for i in range(n_steps):
        out[i + 1] = a @ out[i]
    return out


def build_k(m: MomentModel, eta: float, k_cap: int = K_CAP) -> KMatrix:
    """Assemble the lexicographic transition matrix for step size ``eta``."""
    if not eta >= 0:
        raise ValueError(f"step size must be nonnegative, got {eta}")
    r = m.dim
    if r * r > k_cap:
        raise KaflabError(
            f"transition matrix would have {r * r} rows, above the cap of {k_cap}"
        )
    k1 = kron(np.eye(r), m.r_tilde)
    k2 = kron(m.r_tilde, np.eye(r))
    k3 = m.s_tilde.transpose(1, 0, 3, 2).reshape(r * r, r * r)
    k = np.eye(r * r) - eta * (k1 + k2) + eta**2 * k3
    return KMatrix(k=k, k1=k1, k2=k2, k3=k3, eta=eta)


def mean_square_stable(km: KMatrix) -> tuple[bool, float]:
    """Whether the transition matrix is a strict contraction, plus its spectral radius."""
    radius = spectral_radius(km.k)
    return radius < 1.0, radius


def transient_states(m: MomentModel, eta: float, n_steps: int):
    """Yield the transient recursion states at iterations 0..n_steps.

    Starts from the zero-coefficient initial condition, i.e. the weight-error
    correlation is the outer product of the optimal transformed weights, so
    the MSE starts at the raw signal power. Each step applies

        C <- C + eta^2 (T(C) + j_min r_tilde) - eta (r_tilde C + C r_tilde),
        T(C)[l, m] = trace(s_tilde[l, m] C),

    re-symmetrizing C to suppress floating-point drift.
    """
    if not eta > 0:
        raise ValueError(f"step size must be positive, got {eta}")
    r_t = m.r_tilde
    c = np.outer(m.alpha_star_tilde, m.alpha_star_tilde)
    yield TransientState(c_tilde=c, n=0, mse=m.j_min + np.trace(r_t @ c))
    for n in range(1, n_steps + 1):
        t = np.tensordot(m.s_tilde, c, axes=([3, 2], [0, 1]))
        c = c + eta**2 * (t + m.j_min * r_t) - eta * (r_t @ c + c @ r_t)
        c = symmetrize(c)
        val = m.j_min + np.trace(r_t @ c)
        if not np.isfinite(val):
            raise DivergenceError(
                f"transient recursion produced a non-finite MSE at step {n}",
                last_finite_step=n - 1,
            )
        yield TransientState(c_tilde=c, n=n, mse=val)


def transient_mse(
    m: MomentModel, eta: float, n_steps: int, check_stability: bool = True
) -> LearningCurve:
    """Theoretical MSE at iterations 0..n_steps from the correlation recursion.

    See :func:`transient_states` for the recursion; this collects only the
    MSE values. When ``check_stability`` is set, an unstable transition
    matrix triggers a warning but the recursion still runs (divergence then
    surfaces as :class:`DivergenceError`).
    """
    if check_stability:
        stable, radius = mean_square_stable(build_k(m, eta))
        if not stable:
            warnings.warn(
                f"transition matrix has spectral radius {radius:.6f} >= 1; "
                f"the transient recursion may diverge",
                stacklevel=2,
            )
    mse = np.empty(n_steps + 1)
    for state in transient_states(m, eta, n_steps):
        mse[state.n] = state.mse
    return LearningCurve(mse=mse, n_runs=0, kind=CurveKind.THEORETICAL)


def steady_state_mse(m: MomentModel, eta: float, k_cap: int = K_CAP) -> tuple[float, np.ndarray]:
    """Steady-state MSE and weight-error correlation from the fixed-point solve.

    Solves ``(I - K) c = eta^2 j_min vec(r_tilde)`` with a pivoted LU
    factorization; refuses when K is not a contraction (the fixed point is
    then meaningless) or when the factorization is numerically singular.
    """
    km = build_k(m, eta, k_cap=k_cap)
    stable, radius = mean_square_stable(km)
    if not stable:
        raise NotStableError(
            f"transition matrix has spectral radius {radius:.6f} >= 1; "
            f"no steady state exists",
            spectral_radius=radius,
        )
    r = m.dim
    a = np.eye(r * r) - km.k
    lu, piv = lu_factor(a)
    pivot_floor = 1e-14 * np.abs(a).max()
    if np.abs(np.diag(lu)).min() < pivot_floor:
        raise NotStableError(
            f"fixed-point system is numerically singular "
            f"(pivot below {pivot_floor:.3e})",
            spectral_radius=radius,
        )
    c_vec = lu_solve((lu, piv), eta**2 * m.j_min * vec_lex(m.r_tilde))
    c_inf = symmetrize(unvec_lex(c_vec, r))
    return float(m.j_min + np.trace(m.r_tilde @ c_inf)), c_inf


def complexity_report(r: int, L: int, s_n: int) -> tuple[int, int]:
    """Per-iteration real-multiplication counts (full update, selective update).

    Full update costs ``(L + r + 2) r``; the selective update costs
    ``(L + s_n + 1) r`` for distances and selection plus ``s_n^3`` for the
    small solve.
    """
    if r < 1 or L < 1 or s_n < 1:
        raise ValueError("r, L and s_n must all be positive")
    full = (L + r + 2) * r
    selective = (L + s_n + 1) * r + s_n**3
    return full, selective
