"""Compressive-sensing evaluation of designed sensing matrices.

``solve_l1`` computes ``min ||x||_1 s.t. ||A x - y||_2 <= eta`` for complex
data through its penalized form ``min 0.5||A x - y||^2 + lam ||x||_1``:
FISTA (with adaptive restart) solves the penalized problem, and ``lam`` is
bracketed and bisected in log space until the residual meets ``eta`` from
below. Everything is vectorized over columns so that a whole batch of trials
shares one sensing matrix and runs in lock-step.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

# noiseless targets are matched to this fraction of ||y|| instead of exactly 0
EXACT_RESIDUAL = 1e-10


@dataclass(frozen=True)
class Phantom:
    x_true: np.ndarray
    support: np.ndarray
    seed: object


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Additive complex Gaussian noise.

    With ``snr_db`` the noise variance of each trial is set from the signal
    ``reference @ x_true`` (or from the evaluated matrix itself when
    ``reference`` is None). Passing the same reference for several designs
    fixes the absolute noise level, so paired trials see identical noise.
    """

    snr_db: float | None = None
    eta: float | None = None
    reference: np.ndarray | None = None

    def __post_init__(self):
        if (self.snr_db is None) == (self.eta is None):
            raise ValueError("set exactly one of snr_db or eta")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be non-negative")


@dataclass(frozen=True)
class ReconResult:
    x_hat: np.ndarray
    residual: float
    support_recovered: bool
    relative_error: float
    converged: bool = True
    lam: float = 0.0


def make_phantom(N: int, S: int, seed) -> Phantom:
    """Random S-sparse complex vector with magnitudes >= 0.1 of the largest."""
    if not 1 <= S <= N:
        raise ValueError("sparsity must satisfy 1 <= S <= N")
    rng = np.random.default_rng(seed)
    return _phantom_from_rng(N, S, rng, seed)


def _phantom_from_rng(N, S, rng, seed=None) -> Phantom:
    support = np.sort(rng.choice(N, size=S, replace=False))
    vals = rng.standard_normal(S) + 1j * rng.standard_normal(S)
    mag = np.abs(vals)
    floor = 0.1 * mag.max()
    small = mag < floor
    vals[small] *= floor / mag[small]
    x = np.zeros(N, dtype=complex)
    x[support] = vals
    return Phantom(x, support, seed)


def noise_bound(sigma2: float, M: int, quantile: float = 0.95) -> float:
    """``quantile`` of ||n||_2 for circular complex Gaussian noise of variance sigma2."""
    # 2||n||^2 / sigma2 ~ chi^2 with 2M degrees of freedom
    return float(np.sqrt(0.5 * sigma2 * stats.chi2.ppf(quantile, 2 * M)))


def _soft(v, t):
    mag = np.abs(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > t, 1.0 - t / mag, 0.0)
    return v * scale


def _lasso(A, AH, Y, lam, X0, L, tol, max_iter):
    """Batched FISTA with gradient-based restart. Returns (X, converged)."""
    x = X0.copy()
    z = x.copy()
    theta = np.ones(Y.shape[1])
    t = 1.0 / L
    thr = t * lam[None, :]
    done = np.zeros(Y.shape[1], dtype=bool)
    for _ in range(max_iter):
        x_new = _soft(z - t * (AH @ (A @ z - Y)), thr)
        dx = x_new - x
        restart = np.real(np.sum(np.conj(z - x_new) * dx, axis=0)) > 0
        theta = np.where(restart, 1.0, theta)
        theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta**2))
        z = x_new + ((theta - 1.0) / theta_new)[None, :] * dx
        theta = theta_new
        step = np.linalg.norm(dx, axis=0)
        size = np.linalg.norm(x_new, axis=0)
        x = x_new
        done = step <= tol * np.maximum(size, 1e-300)
        if np.all(done):
            break
    return x, done


def _solve_batch(A, Y, eta, tol=1e-12, max_iter=5000, max_bisect=60, rtol_eta=1e-4):
    A = np.asarray(A, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    M, N = A.shape
    T = Y.shape[1]
    AH = A.conj().T
    L = max(np.linalg.norm(A, 2) ** 2, 1e-300)
    ynorm = np.linalg.norm(Y, axis=0)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (T,)).copy()
    exact = eta == 0
    target = np.where(exact, EXACT_RESIDUAL * ynorm, eta)

    X = np.zeros((N, T), dtype=complex)
    lam_used = np.zeros(T)
    converged = np.ones(T, dtype=bool)
    active = ynorm > target
    hi = np.max(np.abs(AH @ Y), axis=0)          # x = 0 is optimal for lam >= hi
    lo = np.full(T, np.nan)
    X_lo = np.zeros_like(X)
    lo_conv = np.ones(T, dtype=bool)
    X_cur = np.zeros_like(X)

    for _ in range(max_bisect + 60):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        lam = np.where(np.isnan(lo[idx]), hi[idx] / 4.0, np.sqrt(lo[idx] * np.maximum(hi[idx], 1e-300)))
        Xs, conv = _lasso(A, AH, Y[:, idx], lam, X_cur[:, idx], L, tol, max_iter)
        X_cur[:, idx] = Xs
        res = np.linalg.norm(A @ Xs - Y[:, idx], axis=0)
        feasible = res <= target[idx]
        for j, col in enumerate(idx):
            if feasible[j]:
                lo[col] = lam[j]
                X_lo[:, col] = Xs[:, j]
                lo_conv[col] = conv[j]
                stop = exact[col] or target[col] - res[j] <= rtol_eta * target[col]
            else:
                hi[col] = lam[j]
                stop = False
            if not np.isnan(lo[col]) and hi[col] / lo[col] < 1.0 + 1e-9:
                stop = True
            if stop:
                active[col] = False
        # columns that never became feasible within budget are flagged below
    X[:, ~np.isnan(lo)] = X_lo[:, ~np.isnan(lo)]
    lam_used[:] = np.where(np.isnan(lo), 0.0, lo)
    converged &= ~np.isnan(lo) | (ynorm <= target)
    converged &= lo_conv | np.isnan(lo)
    residual = np.linalg.norm(A @ X - Y, axis=0)
    return X, residual, converged, lam_used


def solve_l1(A, y, eta: float, x_true=None, tol=1e-12, max_iter=5000) -> ReconResult:
    """Minimum-l1 solution with ``||A x - y|| <= eta``.

    For ``eta == 0`` the equality constraint is matched to a relative residual
    of ``1e-10``. ``x_true`` (optional) fills the error fields of the result.
    """
    if eta < 0:
        raise ValueError("eta must be non-negative")
    A = np.asarray(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("sensing matrix has non-finite entries")
    y = np.asarray(y, dtype=complex)
    X, res, conv, lam = _solve_batch(A, y[:, None], eta, tol=tol, max_iter=max_iter)
    x_hat = X[:, 0]
    return _result(x_hat, res[0], conv[0], lam[0], x_true)


def _result(x_hat, residual, converged, lam, x_true):
    if x_true is None:
        return ReconResult(x_hat, float(residual), False, float("nan"), bool(converged), float(lam))
    x_true = np.asarray(x_true)
    denom = np.linalg.norm(x_true)
    rel = float(np.linalg.norm(x_hat - x_true) / denom) if denom > 0 else float(np.linalg.norm(x_hat))
    peak = np.abs(x_hat).max() if x_hat.size else 0.0
    est = set(np.flatnonzero(np.abs(x_hat) > 1e-3 * peak)) if peak > 0 else set()
    return ReconResult(x_hat, float(residual), est == set(np.flatnonzero(x_true)), rel,
                       bool(converged), float(lam))


def trial_rng(seed: int, S: int, trial: int) -> np.random.Generator:
    """Per-(S, trial) generator shared by every design for paired comparisons."""
    return np.random.default_rng([int(seed), int(S), int(trial)])


def success_threshold(noise: NoiseSpec | None) -> float:
    """Relative-error threshold: ``1e-2`` noiseless, ``3 * 10^(-snr/20)`` noisy."""
    if noise is None or noise.snr_db is None:
        return 1e-2
    return 3.0 * 10 ** (-noise.snr_db / 20.0)


def run_trials(A, S: int, trials: int, noise: NoiseSpec | None = None, seed: int = 0):
    """Reconstruct ``trials`` paired phantoms of sparsity ``S``.

    Returns ``(relative_errors, converged)`` arrays.
    """
    A = np.asarray(A)
    M, N = A.shape
    ref = A if noise is None or noise.reference is None else np.asarray(noise.reference)
    if ref.shape != A.shape:
        raise ValueError("noise reference must match the sensing matrix shape")
    phantoms, Y, etas = [], [], []
    for t in range(trials):
        rng = trial_rng(seed, S, t)
        ph = _phantom_from_rng(N, S, rng, (seed, S, t))
        y = A @ ph.x_true
        w = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        if noise is None:
            eta = 0.0
        elif noise.snr_db is not None:
            y_ref = ref @ ph.x_true
            sigma2 = np.vdot(y_ref, y_ref).real / (M * 10 ** (noise.snr_db / 10.0))
            y = y + np.sqrt(sigma2 / 2.0) * w
            eta = noise_bound(sigma2, M)
        else:
            # fixed-norm perturbation on the constraint boundary
            eta = noise.eta
            y = y + w * (eta / np.linalg.norm(w))
        phantoms.append(ph.x_true)
        Y.append(y)
        etas.append(eta)
    X, _, conv, _ = _solve_batch(A, np.array(Y).T, np.array(etas))
    Xt = np.array(phantoms).T
    rel = np.linalg.norm(X - Xt, axis=0) / np.linalg.norm(Xt, axis=0)
    return rel, conv


def success_curve(A, sparsity_levels, trials: int = 50, noise: NoiseSpec | None = None,
                  seed: int = 0, threshold: float | None = None) -> list[tuple[int, float]]:
    """Empirical reconstruction success rate for each sparsity level.

    A trial succeeds when its relative error is below ``1e-2`` (noiseless) or
    ``3 * 10^(-snr_db/20)`` (noisy); unconverged trials count as failures.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    thr = success_threshold(noise) if threshold is None else threshold
    out = []
    for S in sparsity_levels:
        rel, conv = run_trials(A, int(S), trials, noise, seed)
        out.append((int(S), float(np.mean((rel < thr) & conv))))
    return out


def energy_map(G) -> np.ndarray:
    """Per-voxel energy ``sum_{i,m} |G[i, m, n]|^2``."""
    g = np.asarray(getattr(G, "G", G))
    if g.ndim == 2:
        g = g[None]
    return np.sum(g.real**2 + g.imag**2, axis=(0, 1))


def write_curve_csv(path, curve, trials: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["S", "rate", "trials"])
        for S, rate in curve:
            w.writerow([S, repr(float(rate)), trials])


def read_curve_csv(path) -> list[tuple[int, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["S"]), float(r["rate"])) for r in rows]


def write_map_csv(path, grid, values) -> None:
    """Grid-shaped CSV: one row per z index, one column per y index."""
    img = grid.as_image(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in img:
            w.writerow([repr(float(v)) for v in row])


def read_map_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
