"""Unified capacity + energy design objective and its exact gradient.

The objective (to be maximized) is::

    alpha_A log det(A A^H + beta_A I) + sum_i alpha_t[i] log det(G_t[i] G_t[i]^H + beta_t[i] I)
  + sum_i alpha_r[i] log det(G_r[i] G_r[i]^H + beta_r[i] I)
  + sum_m a_m diag(lambda_A[m]) a_m^H + (same quadratic forms for G_t[i], G_r[i])

with natural logarithms. Every term is a real function of complex field
matrices, so its derivative in a design variable is ``2 Re <W, dX/d eps_p>``
for an adjoint weight ``W`` of the same shape as ``X``. The weights of ``A``
are pushed back onto ``G_t`` and ``G_r`` through the element-wise products,
and the field matrices reduce them against the factored field derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from . import sensing
from .forward import FieldMatrix, ForwardModel

TERM_NAMES = ("logdet_A", "logdet_t", "logdet_r", "energy_A", "energy_t", "energy_r")
TABLE_COLUMNS = ("capacity", "efficiency", "capacity_efficiency", "all_terms")
NULL_STEERING = "null_steering"


class ObjectiveError(ValueError):
    pass


def _triple(v):
    return np.broadcast_to(np.asarray(v, dtype=float), (3,)).copy()


@dataclass(frozen=True, eq=False)
class ObjectiveConfig:
    """Weights of the unified objective.

    ``lambda_*`` hold the diagonals of the per-measurement energy-shaping
    matrices: ``lambda_A`` is ``(M, N)``, ``lambda_t``/``lambda_r`` are
    ``(3, M, N)``. ``None`` means all zeros.
    """

    alpha_A: float = 0.0
    alpha_t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    alpha_r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    beta_A: float = 1e-6
    beta_t: np.ndarray = field(default_factory=lambda: np.full(3, 1e-6))
    beta_r: np.ndarray = field(default_factory=lambda: np.full(3, 1e-6))
    lambda_A: np.ndarray | None = None
    lambda_t: np.ndarray | None = None
    lambda_r: np.ndarray | None = None
    zeta: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        for key in ("alpha_t", "alpha_r", "beta_t", "beta_r"):
            object.__setattr__(self, key, _triple(getattr(self, key)))
        alphas = np.concatenate([[self.alpha_A], self.alpha_t, self.alpha_r])
        betas = np.concatenate([[self.beta_A], self.beta_t, self.beta_r])
        if np.any(alphas < 0):
            raise ObjectiveError("alpha weights must be non-negative")
        if np.any((alphas > 0) & ~(betas > 0)):
            raise ObjectiveError("beta must be positive wherever alpha is positive")
        if self.zeta <= 0:
            raise ObjectiveError("zeta must be positive")

    def check_shape(self, M: int, N: int) -> None:
        for key, shape in (("lambda_A", (M, N)), ("lambda_t", (3, M, N)), ("lambda_r", (3, M, N))):
            lam = getattr(self, key)
            if lam is not None and np.shape(lam) != shape:
                raise ObjectiveError(f"{key} has shape {np.shape(lam)}, expected {shape}")


def null_mask(grid, center, radius: float) -> np.ndarray:
    """Boolean mask of grid points within ``radius`` of ``center``."""
    d = np.linalg.norm(grid.points - np.asarray(center, dtype=float), axis=1)
    return d <= radius


def table_config(name: str, M: int, N: int, null=None, null_weight: float = -30.0,
                 zeta: float = 1.0) -> ObjectiveConfig:
    """Named parameter columns for the imaging and null-steering designs."""
    eye = np.ones((M, N))
    beta = 1e-6
    if name == "capacity":
        cfg = ObjectiveConfig(alpha_A=1.0)
    elif name == "efficiency":
        cfg = ObjectiveConfig(alpha_A=0.0, lambda_A=eye)
    elif name == "capacity_efficiency":
        cfg = ObjectiveConfig(alpha_A=1.0, lambda_A=10.0 * eye)
    elif name == "all_terms":
        cfg = ObjectiveConfig(alpha_A=1.0, alpha_t=0.25, alpha_r=0.25, lambda_A=10.0 * eye,
                              lambda_t=2.5 * np.ones((3, M, N)), lambda_r=2.5 * np.ones((3, M, N)))
    elif name == NULL_STEERING:
        if null is None:
            raise ObjectiveError("null-steering configuration needs a voxel mask")
        lam = np.zeros((3, M, N))
        lam[:, :, np.asarray(null, dtype=bool)] = null_weight
        cfg = ObjectiveConfig(alpha_A=0.0, alpha_r=1.0, lambda_r=lam)
    else:
        raise ObjectiveError(f"unknown objective column {name!r}")
    return replace(cfg, beta_A=beta, beta_t=np.full(3, beta), beta_r=np.full(3, beta),
                   zeta=zeta, name=name)


def config_from_dict(doc: dict, M: int, N: int, null=None, zeta: float = 1.0) -> ObjectiveConfig:
    """Build a config from a JSON-style dict.

    ``{"column": name}`` expands a named column; explicit fields (``alpha_A``,
    ``alpha_t``, ``beta_*``, and scalar multiples of identity ``lambda_*``)
    override it.
    """
    base = table_config(doc["column"], M, N, null=null, zeta=zeta,
                        null_weight=doc.get("null_weight", -30.0)) if "column" in doc \
        else ObjectiveConfig(zeta=zeta)
    kw = {}
    for key in ("alpha_A", "beta_A"):
        if key in doc:
            kw[key] = float(doc[key])
    for key in ("alpha_t", "alpha_r", "beta_t", "beta_r"):
        if key in doc:
            kw[key] = _triple(doc[key])
    if "lambda_A" in doc:
        kw["lambda_A"] = float(doc["lambda_A"]) * np.ones((M, N))
    for key in ("lambda_t", "lambda_r"):
        if key in doc:
            kw[key] = _triple(doc[key])[:, None, None] * np.ones((3, M, N))
    kw["name"] = doc.get("name", doc.get("column", "custom"))
    return replace(base, **kw)


@dataclass(frozen=True)
class ObjectiveEvaluation:
    value: float
    terms: dict
    gradient: np.ndarray | None = None


def _logdet_and_weight(X, beta, need_weight):
    """``log det(X X^H + beta I)`` and the adjoint weight ``(X X^H + beta I)^{-1} X``."""
    M, N = X.shape
    if M <= N:
        cf = sensing.gram_factor(X, beta)
        value = 2.0 * np.sum(np.log(np.diag(cf[0]).real))
        W = linalg.cho_solve(cf, X) if need_weight else None
    else:
        XH = X.conj().T
        cf = sensing.gram_factor(XH, beta)
        value = 2.0 * np.sum(np.log(np.diag(cf[0]).real)) + (M - N) * np.log(beta)
        W = linalg.cho_solve(cf, XH).conj().T if need_weight else None
    return float(value), W


def _energy(X, lam):
    return float(np.sum(lam * (X.real**2 + X.imag**2)))


def _evaluate_fields(fm_t: FieldMatrix, fm_r: FieldMatrix, cfg: ObjectiveConfig, need_grad: bool):
    Gt, Gr = fm_t.G, fm_r.G
    A = sensing.assemble(Gt, Gr, cfg.zeta).A
    cfg.check_shape(*A.shape)
    terms = dict.fromkeys(TERM_NAMES, 0.0)
    W_A = np.zeros_like(A) if need_grad else None
    W_t = np.zeros_like(Gt) if need_grad else None
    W_r = np.zeros_like(Gr) if need_grad else None

    if cfg.alpha_A > 0:
        v, W = _logdet_and_weight(A, cfg.beta_A, need_grad)
        terms["logdet_A"] = cfg.alpha_A * v
        if need_grad:
            W_A += cfg.alpha_A * W
    if cfg.lambda_A is not None:
        terms["energy_A"] = _energy(A, cfg.lambda_A)
        if need_grad:
            W_A += cfg.lambda_A * A

    for side, G, W_side, alpha, beta, lam in (
            ("t", Gt, W_t, cfg.alpha_t, cfg.beta_t, cfg.lambda_t),
            ("r", Gr, W_r, cfg.alpha_r, cfg.beta_r, cfg.lambda_r)):
        for i in range(3):
            if alpha[i] > 0:
                v, W = _logdet_and_weight(G[i], beta[i], need_grad)
                terms["logdet_" + side] += alpha[i] * v
                if need_grad:
                    W_side[i] += alpha[i] * W
            if lam is not None:
                terms["energy_" + side] += _energy(G[i], lam[i])
                if need_grad:
                    W_side[i] += lam[i] * G[i]

    value = float(sum(terms.values()))
    grad = None
    if need_grad:
        # A = zeta sum_i Gt[i] * Gr[i]: push the A weight onto both factors
        W_t += cfg.zeta * W_A[None] * np.conj(Gr)
        W_r += cfg.zeta * W_A[None] * np.conj(Gt)
        grad = fm_t.pullback(W_t) + fm_r.pullback(W_r)
    return ObjectiveEvaluation(value, terms, grad)


def evaluate(design, model: ForwardModel, cfg: ObjectiveConfig) -> ObjectiveEvaluation:
    fm_t, fm_r = model.fields(design)
    return _evaluate_fields(fm_t, fm_r, cfg, need_grad=False)


def evaluate_with_gradient(design, model: ForwardModel, cfg: ObjectiveConfig) -> ObjectiveEvaluation:
    fm_t, fm_r = model.fields(design)
    return _evaluate_fields(fm_t, fm_r, cfg, need_grad=True)


def gradient(design, model: ForwardModel, cfg: ObjectiveConfig) -> np.ndarray:
    return evaluate_with_gradient(design, model, cfg).gradient


class DesignProblem:
    """Adapter exposing ``value`` / ``gradient`` / ``terms`` to the optimizer."""

    def __init__(self, model: ForwardModel, cfg: ObjectiveConfig):
        self.model = model
        self.cfg = cfg
        M, N = model.shape
        cfg.check_shape(M, N)
        self._last = None

    def _remember(self, x, ev):
        self._last = (np.array(x, dtype=float), ev)
        return ev

    def value(self, x) -> float:
        return self._remember(x, evaluate(x, self.model, self.cfg)).value

    def value_and_gradient(self, x):
        ev = self._remember(x, evaluate_with_gradient(x, self.model, self.cfg))
        return ev.value, ev.gradient

    def gradient(self, x) -> np.ndarray:
        return self.value_and_gradient(x)[1]

    def terms(self, x) -> dict:
        # the optimizer asks for terms right after evaluating the same point
        if self._last is not None and np.array_equal(self._last[0], x):
            return dict(self._last[1].terms)
        return self._remember(x, evaluate(x, self.model, self.cfg)).terms
