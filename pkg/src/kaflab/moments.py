"""Statistical quantities driving the performance model.

Closed-form moments
-------------------
For a zero-mean Gaussian input ``u ~ N(0, R_u)`` and Gaussian kernel of width
sigma, products of kernel values are log-quadratic in ``u``:

    prod_k kappa(u, c_k) = exp(-u'Au + b'u + c),
    A = (K / (2 sigma^2)) I,   b = (sum_k c_k) / sigma^2,
    c = -(sum_k ||c_k||^2) / (2 sigma^2),

so the expectation is a Gaussian integral with the closed form

    E[prod_k kappa(u, c_k)]
        = |I + 2 R_u A|^(-1/2) * exp(c + b'(R_u^-1 + 2A)^-1 b / 2).

``(R_u^-1 + 2A)^-1`` is evaluated as ``(I + 2 A R_u)^-1 R_u`` via a solve, so
``R_u`` is never inverted and near-singular covariances stay well conditioned
(a truly singular ``R_u`` must be regularized by the caller, e.g. ``eps * I``).

The same formula with K = 2 gives every entry of the kernelized-input
autocorrelation matrix, and with K = 4 the fourth-moment tensor used by the
transient recursion.

Cross statistics
----------------
The cross-correlation vector ``p = E[d_n kappa_n]`` and the signal power
``E[d_n^2]`` cannot be written in closed form for a black-box plant; they are
estimated from a long stationary stream with the leading samples discarded as
burn-in.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NotPositiveDefiniteError
from .kernel import Dictionary, GaussianKernel, GramFactor, gram
from .linalg import symmetrize, sym_eig

# Samples discarded from the head of estimation streams so that the AR input
# and recursive plants reach stationarity.
CROSS_STATS_BURN_IN = 1000


@dataclass(frozen=True)
class InputModel:
    """Zero-mean Gaussian input law with covariance ``r_u`` (must be PD)."""

    r_u: np.ndarray

    def __post_init__(self):
        r_u = symmetrize(np.atleast_2d(np.asarray(self.r_u, dtype=float)))
        w = np.linalg.eigvalsh(r_u)
        if w[0] <= 0:
            raise NotPositiveDefiniteError(
                f"input covariance is not positive definite "
                f"(smallest eigenvalue {w[0]:.6e}); pass a regularized covariance",
                smallest_eigenvalue=float(w[0]),
            )
        object.__setattr__(self, "r_u", r_u)

    @property
    def dim(self) -> int:
        return self.r_u.shape[0]


@dataclass(frozen=True)
class CrossStats:
    """Stream-estimated cross statistics with per-component standard errors."""

    p: np.ndarray
    d2: float
    p_stderr: np.ndarray
    d2_stderr: float
    n_samples: int


@dataclass(frozen=True)
class MomentModel:
    """Everything the analysis consumes, in one immutable bundle.

    Raw-coordinate quantities: ``r_kappa`` (autocorrelation of the kernelized
    input), ``p`` and ``d2`` (stream-estimated cross statistics), ``s_tensor``
    (fourth moments ``E[kappa_i kappa_j kappa_s kappa_t]``).

    Transformed quantities, with W the inverse Gram square root and g_l its
    l-th column: ``r_tilde = W r_kappa W``, ``p_tilde = W p``,
    ``alpha_star_tilde = r_tilde^-1 p_tilde``, ``j_min = d2 - p_tilde'
    alpha_star_tilde``, ``h[m, p] = g_m' S_{i,j} g_p`` arranged as
    ``h[m, p, i, j]``, and ``s_tilde[l, m, p, q] = g_l' h[m, p] g_q``.
    """

    r_kappa: np.ndarray
    p: np.ndarray
    d2: float
    r_tilde: np.ndarray
    p_tilde: np.ndarray
    alpha_star_tilde: np.ndarray
    j_min: float
    s_tensor: np.ndarray
    h: np.ndarray
    s_tilde: np.ndarray
    gram: GramFactor

    @property
    def dim(self) -> int:
        return self.r_kappa.shape[0]


# ---------------------------------------------------------------------------
# Closed-form moments
# ---------------------------------------------------------------------------


def _moment_batch(
    sums: np.ndarray, sq_norms: np.ndarray, n_points: int, k: GaussianKernel, im: InputModel
) -> np.ndarray:
    """Closed-form moment for a batch of center tuples.

    ``sums[t]`` is the sum of the tuple's centers and ``sq_norms[t]`` the sum
    of their squared norms; ``n_points`` is the tuple length K.
    """
    sig2 = k.sigma**2
    a_mat = np.eye(im.dim) + (n_points / sig2) * im.r_u
    det = np.linalg.det(a_mat)
    m = symmetrize(np.linalg.solve(a_mat, im.r_u))  # (I + 2 A R_u)^-1 R_u
    quad = np.einsum("ns,st,nt->n", sums, m, sums)
    return det**-0.5 * np.exp(-sq_norms / (2.0 * sig2) + quad / (2.0 * sig2**2))


def multi_point_moment(centers, k: GaussianKernel, im: InputModel) -> float:
    """``E[prod_k kappa(u, c_k)]`` for ``u ~ N(0, R_u)`` over K >= 1 centers."""
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    if c.shape[0] < 1:
        raise ValueError("at least one center is required")
    if c.shape[1] != im.dim:
        raise DimensionMismatchError(
            f"centers have length {c.shape[1]}, input model expects {im.dim}"
        )
    val = _moment_batch(
        c.sum(axis=0)[None, :],
        np.array([(c**2).sum()]),
        c.shape[0],
        k,
        im,
    )
    return float(val[0])


def second_moment(d: Dictionary, k: GaussianKernel, im: InputModel) -> np.ndarray:
    """Autocorrelation matrix of the kernelized input, entry (l, m) a two-point moment.

    Exactly symmetric by construction: each unordered pair is computed once and
    mirrored.
    """
    c = d.centers
    if c.shape[1] != im.dim:
        raise DimensionMismatchError(
            f"dictionary has input dim {c.shape[1]}, input model expects {im.dim}"
        )
    idx = np.array(list(itertools.combinations_with_replacement(range(d.size), 2)))
    vals = _moment_batch(
        c[idx[:, 0]] + c[idx[:, 1]],
        (c[idx[:, 0]] ** 2).sum(axis=1) + (c[idx[:, 1]] ** 2).sum(axis=1),
        2,
        k,
        im,
    )
    out = np.empty((d.size, d.size))
    out[idx[:, 0], idx[:, 1]] = vals
    out[idx[:, 1], idx[:, 0]] = vals
    return out


def fourth_tensor(d: Dictionary, k: GaussianKernel, im: InputModel) -> np.ndarray:
    """Fourth-moment tensor ``S[i, j, s, t] = E[kappa_i kappa_j kappa_s kappa_t]``.

    Only the distinct index multisets are evaluated; each value is mirrored to
    all permutations, so the full 4-index symmetry holds exactly.
    """
    c = d.centers
    if c.shape[1] != im.dim:
        raise DimensionMismatchError(
            f"dictionary has input dim {c.shape[1]}, input model expects {im.dim}"
        )
    r = d.size
    idx = np.array(list(itertools.combinations_with_replacement(range(r), 4)))
    gathered = c[idx]  # (n_multisets, 4, L)
    vals = _moment_batch(gathered.sum(axis=1), (gathered**2).sum(axis=(1, 2)), 4, k, im)
    out = np.empty((r, r, r, r))
    for perm in itertools.permutations(range(4)):
        out[tuple(idx[:, a] for a in perm)] = vals
    return out


# ---------------------------------------------------------------------------
# Monte-Carlo oracles for the closed forms
# ---------------------------------------------------------------------------


def _kernel_columns(samples: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    d2 = ((samples[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    return np.exp(-d2 / (2.0 * sigma**2))


def mc_second_moment(
    d: Dictionary,
    k: GaussianKernel,
    im: InputModel,
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 200_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample estimate of the kernelized-input autocorrelation with standard errors."""
    chol = np.linalg.cholesky(im.r_u)
    r = d.size
    s1 = np.zeros((r, r))
    s2 = np.zeros((r, r))
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        u = rng.standard_normal((n, im.dim)) @ chol.T
        km = _kernel_columns(u, d.centers, k.sigma)
        s1 += km.T @ km
        km2 = km**2
        s2 += km2.T @ km2
        done += n
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean**2, 0.0)
    return mean, np.sqrt(var / n_samples)


def mc_fourth_entries(
    d: Dictionary,
    k: GaussianKernel,
    im: InputModel,
    entries,
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 200_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample estimates of selected fourth-tensor entries with standard errors.

    ``entries`` is a sequence of (i, j, s, t) index tuples.
    """
    entries = [tuple(int(a) for a in e) for e in entries]
    needed = sorted({a for e in entries for a in e})
    pos = {a: i for i, a in enumerate(needed)}
    centers = d.centers[needed]
    chol = np.linalg.cholesky(im.r_u)
    s1 = np.zeros(len(entries))
    s2 = np.zeros(len(entries))
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        u = rng.standard_normal((n, im.dim)) @ chol.T
        km = _kernel_columns(u, centers, k.sigma)
        for e_i, (i, j, s, t) in enumerate(entries):
            prod = km[:, pos[i]] * km[:, pos[j]] * km[:, pos[s]] * km[:, pos[t]]
            s1[e_i] += prod.sum()
            s2[e_i] += (prod**2).sum()
        done += n
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean**2, 0.0)
    return mean, np.sqrt(var / n_samples)


# ---------------------------------------------------------------------------
# Stream-estimated cross statistics
# ---------------------------------------------------------------------------


def estimate_cross_stats(
    system,
    input_gen,
    d: Dictionary,
    k: GaussianKernel,
    n_samples: int,
    seed: int,
    shards: int = 1,
    burn_in: int = CROSS_STATS_BURN_IN,
    chunk: int = 100_000,
) -> CrossStats:
    """Estimate ``p = E[d_n kappa_n]`` and ``E[d_n^2]`` from stationary streams.

    ``system`` is a :class:`kaflab.sim.SystemSimulator` and ``input_gen`` a
    :class:`kaflab.sim.InputGenerator`. Each shard runs an independent stream
    (sub-seeded deterministically from ``seed``) whose first ``burn_in``
    samples are discarded; shard results merge by sample-count weighting, so
    ``(seed, n_samples, shards)`` fully determines the output.
    """
    from . import sim  # local import: sim depends on kernel/filters, not on moments

    if n_samples < 10_000:
        raise ValueError(f"n_samples must be at least 10^4, got {n_samples}")
    if shards < 1 or shards > n_samples:
        raise ValueError(f"shards must lie in [1, n_samples], got {shards}")
    r = d.size
    s_dk = np.zeros(r)
    s_dk2 = np.zeros(r)
    s_d2 = 0.0
    s_d4 = 0.0
    base = n_samples // shards
    for shard in range(shards):
        n_shard = base + (n_samples - base * shards if shard == 0 else 0)
        u_vecs, dd = sim.experiment_stream(
            input_gen,
            system,
            n_shard,
            seed=(seed, sim.CROSS_STATS_SALT, shard),
            warmup=burn_in,
        )
        for i in range(0, n_shard, chunk):
            km = _kernel_columns(u_vecs[i : i + chunk], d.centers, k.sigma)
            dk = km * dd[i : i + chunk, None]
            s_dk += dk.sum(axis=0)
            s_dk2 += (dk**2).sum(axis=0)
        s_d2 += float((dd**2).sum())
        s_d4 += float((dd**4).sum())
    p = s_dk / n_samples
    d2 = s_d2 / n_samples
    p_var = np.maximum(s_dk2 / n_samples - p**2, 0.0)
    d2_var = max(s_d4 / n_samples - d2**2, 0.0)
    return CrossStats(
        p=p,
        d2=d2,
        p_stderr=np.sqrt(p_var / n_samples),
        d2_stderr=float(np.sqrt(d2_var / n_samples)),
        n_samples=n_samples,
    )


# ---------------------------------------------------------------------------
# Model assembly
# ---------------------------------------------------------------------------


def build_model(
    d: Dictionary,
    k: GaussianKernel,
    im: InputModel,
    p: np.ndarray,
    d2: float,
    d2_stderr: float | None = None,
) -> MomentModel:
    """Assemble the full moment model from a dictionary, kernel and input law.

    Computes the closed-form second and fourth moments, applies the inverse
    Gram square-root transform, and contracts the fourth tensor into the
    ``h`` and ``s_tilde`` forms used by the transient recursion.
    """
    p = np.asarray(p, dtype=float).ravel()
    if p.size != d.size:
        raise DimensionMismatchError(f"p has length {p.size}, dictionary size is {d.size}")
    gf = gram(d, k)
    r_kappa = second_moment(d, k, im)
    s_tensor = fourth_tensor(d, k, im)
    w = gf.g_inv_sqrt
    r_tilde = symmetrize(w @ r_kappa @ w)
    eig = sym_eig(r_tilde).eigenvalues
    if eig[0] <= 0:
        raise NotPositiveDefiniteError(
            f"transformed autocorrelation is not positive definite "
            f"(smallest eigenvalue {eig[0]:.6e})",
            smallest_eigenvalue=float(eig[0]),
        )
    p_tilde = w @ p
    alpha_star_tilde = np.linalg.solve(r_tilde, p_tilde)
    j_min = float(d2 - p_tilde @ alpha_star_tilde)
    threshold = 3.0 * d2_stderr if d2_stderr is not None else 0.0
    if j_min < -threshold:
        warnings.warn(
            f"minimum MSE estimate is negative ({j_min:.6e}); the cross "
            f"statistics are likely too noisy for this configuration",
            stacklevel=2,
        )
    h = np.einsum("ms,ijst,tp->mpij", w, s_tensor, w, optimize=True)
    s_tilde = np.einsum("il,mpij,jq->lmpq", w, h, w, optimize=True)
    return MomentModel(
        r_kappa=r_kappa,
        p=p,
        d2=float(d2),
        r_tilde=r_tilde,
        p_tilde=p_tilde,
        alpha_star_tilde=alpha_star_tilde,
        j_min=j_min,
        s_tensor=s_tensor,
        h=h,
        s_tilde=s_tilde,
        gram=gf,
    )


# ---------------------------------------------------------------------------
# Serialization (CSV blocks with named headers, 17 significant digits)
# ---------------------------------------------------------------------------

_FORMAT_TAG = "kaflab-moments,v1"


def save_moment_model(m: MomentModel, path) -> None:
    """Write every field of the model to one structured text file.

    Each block is ``#block,<name>,<rows>,<cols>`` followed by CSV rows at 17
    significant digits, which round-trips IEEE doubles exactly.
    """
    r = m.dim
    blocks = [
        ("r_kappa", m.r_kappa),
        ("p", m.p[None, :]),
        ("r_tilde", m.r_tilde),
        ("p_tilde", m.p_tilde[None, :]),
        ("alpha_star_tilde", m.alpha_star_tilde[None, :]),
        ("s_tensor", m.s_tensor.reshape(r * r, r * r)),
        ("h", m.h.reshape(r * r, r * r)),
        ("s_tilde", m.s_tilde.reshape(r * r, r * r)),
        ("g", m.gram.g),
        ("g_sqrt", m.gram.g_sqrt),
        ("g_inv_sqrt", m.gram.g_inv_sqrt),
        ("g_inv", m.gram.g_inv),
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"#{_FORMAT_TAG}\n")
        f.write(f"#meta,r,{r}\n")
        f.write(f"#scalar,d2,{m.d2:.17g}\n")
        f.write(f"#scalar,j_min,{m.j_min:.17g}\n")
        for name, arr in blocks:
            f.write(f"#block,{name},{arr.shape[0]},{arr.shape[1]}\n")
            np.savetxt(f, arr, fmt="%.17g", delimiter=",")


def load_moment_model(path) -> MomentModel:
    """Rebuild a :class:`MomentModel` written by :func:`save_moment_model`."""
    from scipy.linalg import cho_factor

    scalars: dict[str, float] = {}
    arrays: dict[str, np.ndarray] = {}
    r = None
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != f"#{_FORMAT_TAG}":
            raise ValueError(f"{path} is not a moment-model file (header {header!r})")
        for line in f:
            line = line.strip()
            if not line:
                continue
            if not line.startswith("#"):
                raise ValueError(f"unexpected data line outside a block: {line[:40]!r}")
            parts = line[1:].split(",")
            if parts[0] == "meta" and parts[1] == "r":
                r = int(parts[2])
            elif parts[0] == "scalar":
                scalars[parts[1]] = float(parts[2])
            elif parts[0] == "block":
                name, rows, cols = parts[1], int(parts[2]), int(parts[3])
                data = np.loadtxt(
                    itertools.islice(f, rows), delimiter=",", ndmin=2
                )
                if data.shape != (rows, cols):
                    raise ValueError(
                        f"block {name}: expected shape {(rows, cols)}, got {data.shape}"
                    )
                arrays[name] = data
            else:
                raise ValueError(f"unrecognized header line: {line[:40]!r}")
    if r is None:
        raise ValueError("missing meta,r header")
    g = arrays["g"]
    gf = GramFactor(
        g=g,
        g_sqrt=arrays["g_sqrt"],
        g_inv_sqrt=arrays["g_inv_sqrt"],
        g_inv=arrays["g_inv"],
        _cho=cho_factor(g),
    )
    return MomentModel(
        r_kappa=arrays["r_kappa"],
        p=arrays["p"].ravel(),
        d2=scalars["d2"],
        r_tilde=arrays["r_tilde"],
        p_tilde=arrays["p_tilde"].ravel(),
        alpha_star_tilde=arrays["alpha_star_tilde"].ravel(),
        j_min=scalars["j_min"],
        s_tensor=arrays["s_tensor"].reshape(r, r, r, r),
        h=arrays["h"].reshape(r, r, r, r),
        s_tilde=arrays["s_tilde"].reshape(r, r, r, r),
        gram=gf,
    )
