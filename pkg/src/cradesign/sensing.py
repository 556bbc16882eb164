"""Born sensing matrix and its information / energy diagnostics."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import linalg


class SensingError(ValueError):
    pass


@dataclass(frozen=True)
class SensingMatrix:
    A: np.ndarray
    zeta: float = 1.0

    @property
    def shape(self):
        return self.A.shape

    def row(self, m: int) -> np.ndarray:
        return self.A[m]


@dataclass(frozen=True)
class CapacityReport:
    singular_values: np.ndarray
    epsilon: float
    capacity: float
    ric_lower_bound: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["singular_values"] = self.singular_values.tolist()
        return d


@dataclass(frozen=True)
class EfficiencyReport:
    value: float
    per_measurement: np.ndarray

    def to_dict(self) -> dict:
        return {"value": self.value, "per_measurement": self.per_measurement.tolist()}


def _field_array(G):
    return np.asarray(getattr(G, "G", G))


def assemble(G_t, G_r, zeta: float = 1.0) -> SensingMatrix:
    """``A = zeta * sum_i G_t[i] * G_r[i]`` (element-wise products).

    Accepts ``(3, M, N)`` arrays or objects exposing them as ``.G``.
    """
    gt, gr = _field_array(G_t), _field_array(G_r)
    if gt.shape != gr.shape or gt.ndim != 3:
        raise SensingError(f"field matrices must share a (components, M, N) shape: "
                           f"{gt.shape} vs {gr.shape}")
    if zeta <= 0:
        raise SensingError("zeta must be positive")
    return SensingMatrix(zeta * np.einsum("imn,imn->mn", gt, gr), float(zeta))


def singular_values(matrix) -> np.ndarray:
    return linalg.svdvals(np.asarray(getattr(matrix, "A", matrix)))


def capacity(matrix, epsilon: float = 1.0) -> CapacityReport:
    """Epsilon-capacity in bits, ``sum log2(sigma / epsilon)``.

    Singular values below the usual numerical-rank tolerance count as zero
    and send the capacity to ``-inf``.
    """
    if epsilon <= 0:
        raise SensingError("epsilon must be positive")
    a = np.asarray(getattr(matrix, "A", matrix))
    s = singular_values(a)
    tol = (s[0] if s.size else 0.0) * max(a.shape) * np.finfo(float).eps
    if s.size == 0 or np.any(s <= tol):
        h = -np.inf
        h1 = -np.inf
    else:
        h = float(np.sum(np.log2(s / epsilon)))
        h1 = float(np.sum(np.log2(s)))
    with np.errstate(over="ignore"):
        bound = float(1.0 - np.exp2(2.0 * h1))
    return CapacityReport(s, float(epsilon), h, bound)


def gram_factor(matrix, beta: float):
    """Cholesky factor of ``A A^H + beta I`` (lower, scipy ``cho_factor`` form)."""
    a = np.asarray(matrix)
    F = a @ a.conj().T
    F[np.diag_indices_from(F)] += beta
    try:
        return linalg.cho_factor(F, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SensingError(f"Gram matrix is not positive definite (beta={beta})") from exc


def regularized_logdet(matrix, beta: float) -> float:
    """Natural-log ``log det(A A^H + beta I_M)`` via Cholesky."""
    if beta <= 0:
        raise SensingError("beta must be positive")
    a = np.asarray(getattr(matrix, "A", matrix))
    m, n = a.shape
    if m > n:
        # det(AA^H + bI_M) = det(A^H A + bI_N) b^(M-N)
        c, _ = gram_factor(a.conj().T, beta)
        return float(2.0 * np.sum(np.log(np.diag(c).real)) + (m - n) * np.log(beta))
    c, _ = gram_factor(a, beta)
    return float(2.0 * np.sum(np.log(np.diag(c).real)))


def efficiency(rows, lambdas) -> EfficiencyReport:
    """``sum_m row_m diag(lambda_m) row_m^H`` for real diagonal weights."""
    r = np.atleast_2d(np.asarray(getattr(rows, "A", rows)))
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim == 1:
        lam = np.broadcast_to(lam, r.shape)
    if lam.shape != r.shape:
        raise SensingError(f"weights {lam.shape} do not match rows {r.shape}")
    per = np.einsum("mn,mn->m", lam, np.abs(r) ** 2)
    return EfficiencyReport(float(per.sum()), per)


def write_singular_values_csv(path, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for v in values:
            w.writerow([repr(float(v))])


def read_singular_values_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        vals = [float(row[0]) for row in csv.reader(fh) if row]
    return np.array(vals)


def write_report_json(path, report) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
