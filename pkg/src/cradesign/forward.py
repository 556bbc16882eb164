"""Physical-optics (equivalent current) forward model of the coated reflector.

Each facet is illuminated by a locally planar wave from a port, carries
equivalent electric and magnetic surface currents that are affine in the
facet's two reflection coefficients, and radiates into the imaging region
through a per-facet far-field kernel. Because radiation is linear in the
currents, the field at the imaging grid splits as::

    g = e + E_te @ gamma_te + E_tm @ gamma_tm

which is what :func:`build_field_decomposition` precomputes once per
(port, frequency) pair.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import constants

from . import fresnel
from .geometry import GeometryError, ImagingGrid, MeasurementPlan, Port, ReflectorMesh

ETA0 = np.sqrt(constants.mu_0 / constants.epsilon_0)
GRAZING_LIMIT = np.deg2rad(89.9)

# symmetric triangle rules: (barycentric nodes, weights summing to 1)
_A7, _B7 = 0.059715871789770, 0.470142064105115
_C7, _D7 = 0.797426985353087, 0.101286507323456
QUADRATURE = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    3: (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3)),
    7: (np.array([[1 / 3, 1 / 3, 1 / 3],
                  [_A7, _B7, _B7], [_B7, _A7, _B7], [_B7, _B7, _A7],
                  [_C7, _D7, _D7], [_D7, _C7, _D7], [_D7, _D7, _C7]]),
        np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)),
}


class NearFieldWarning(UserWarning):
    """Observation point too close to a facet for the far-field kernel."""


def wavenumber(frequency, eps_b=1.0):
    return 2.0 * np.pi * np.asarray(frequency) * np.sqrt(eps_b) / constants.c


@dataclass(frozen=True)
class IncidentSample:
    """Incident plane-wave data on every facet for one port and frequency."""

    e_te: np.ndarray        # (L,) complex
    e_tm: np.ndarray        # (L,) complex
    te_hat: np.ndarray      # (L, 3)
    tm_hat: np.ndarray      # (L, 3) incident TM direction, te_hat x k_hat
    theta_i: np.ndarray     # (L,)
    k_hat: np.ndarray       # (L, 3)
    normal: np.ndarray      # (L, 3)
    field: np.ndarray       # (L, 3) complex incident E at the centroids
    eta: float

    @property
    def cos_theta(self):
        return np.cos(self.theta_i)


def port_field(port: Port, points, frequency, amplitude=1.0, eps_b=1.0):
    """Incident field of ``port`` at ``points``.

    Returns ``(E, k_hat, distance, pol)`` where ``pol`` is the port
    polarization projected transverse to each propagation direction.
    """
    d = np.atleast_2d(points) - port.position
    dist = np.linalg.norm(d, axis=1)
    k_hat = d / dist[:, None]
    taper = np.clip(k_hat @ port.boresight, 0.0, None) ** port.taper_exponent
    pol = port.polarization - np.outer(k_hat @ port.polarization, np.ones(3)) * k_hat
    pol_norm = np.linalg.norm(pol, axis=1)
    if np.any(pol_norm < 1e-9):
        raise GeometryError("port polarization is parallel to a propagation direction")
    pol /= pol_norm[:, None]
    k = wavenumber(frequency, eps_b)
    amp = amplitude * taper * np.exp(-1j * k * dist) / dist
    return amp[:, None] * pol, k_hat, dist, pol


def decompose_incident(port: Port, mesh: ReflectorMesh, frequency: float,
                       amplitude: float = 1.0, eps_b: float = 1.0) -> IncidentSample:
    field, k_hat, _, pol = port_field(port, mesh.centroids, frequency, amplitude, eps_b)
    n = mesh.normals
    cos_i = -np.einsum("ij,ij->i", k_hat, n)
    theta = np.arccos(np.clip(cos_i, -1.0, 1.0))
    if np.any(theta >= GRAZING_LIMIT):
        bad = int(np.flatnonzero(theta >= GRAZING_LIMIT)[0])
        raise GeometryError(f"facet {bad} is illuminated at grazing or back-side incidence")

    te = np.cross(k_hat, n)
    te_norm = np.linalg.norm(te, axis=1)
    normal_inc = te_norm < 1e-12
    te[~normal_inc] /= te_norm[~normal_inc, None]
    if np.any(normal_inc):
        # plane of incidence undefined: align TE with the incident polarization
        te[normal_inc] = pol[normal_inc]
    tm = np.cross(te, k_hat)
    e_te = np.einsum("ij,ij->i", field, te)
    e_tm = np.einsum("ij,ij->i", field, tm)
    return IncidentSample(e_te, e_tm, te, tm, theta, k_hat, n, field, ETA0 / np.sqrt(eps_b))


def _current_parts(sample: IncidentSample):
    """Split J and M into a constant part and the parts multiplying each gamma."""
    te, n = sample.te_hat, sample.normal
    n_x_te = np.cross(n, te)
    te_x_n = -n_x_te
    cos = sample.cos_theta[:, None]
    a = sample.e_te[:, None]
    b = sample.e_tm[:, None]
    j_te = a * cos * te / sample.eta
    j_tm = b * n_x_te / sample.eta
    m_te = a * te_x_n
    m_tm = b * cos * te
    # J = (j_te + j_tm) - j_te*G_te - j_tm*G_tm ; M = (m_te + m_tm) + m_te*G_te + m_tm*G_tm
    return (j_te + j_tm, m_te + m_tm), (-j_te, m_te), (-j_tm, m_tm)


def equivalent_currents(sample: IncidentSample, gamma_te, gamma_tm):
    """Electric and magnetic surface currents at each facet centroid."""
    _, (jte, mte), (jtm, mtm) = _current_parts(sample)
    g_te = np.broadcast_to(np.asarray(gamma_te), sample.theta_i.shape)[:, None]
    g_tm = np.broadcast_to(np.asarray(gamma_tm), sample.theta_i.shape)[:, None]
    # factored so that the PEC (-1) and open (+1) limits vanish exactly
    return (-jte * (1 - g_te) - jtm * (1 - g_tm), mte * (1 + g_te) + mtm * (1 + g_tm))


class RadiationKernel:
    """Per-facet far-field operator from facet currents to observation points.

    The current on a facet is the centroid value times the incident phase
    ``exp(-j k k_inc . r')`` when ``k_inc`` is given (locally planar
    illumination); the surface integral uses a fixed symmetric triangle rule.
    """

    def __init__(self, mesh: ReflectorMesh, points, frequency, eps_b=1.0, order=3, k_inc=None):
        if order not in QUADRATURE:
            raise ValueError(f"quadrature order must be one of {sorted(QUADRATURE)}")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = float(wavenumber(frequency, eps_b))
        lam = 2.0 * np.pi / k
        self.eta = ETA0 / np.sqrt(eps_b)

        r = pts[:, None, :] - mesh.centroids[None, :, :]
        dist = np.linalg.norm(r, axis=2)
        near = dist < 10.0 * mesh.facet_diameters[None, :]
        if np.any(near):
            warnings.warn(f"{int(near.sum())} observation/facet pair(s) closer than "
                          "10 facet diameters; far-field kernel is inaccurate",
                          NearFieldWarning, stacklevel=2)
        self.r_hat = r / dist[..., None]

        bary, weights = QUADRATURE[order]
        nodes = np.einsum("qc,lcd->lqd", bary, mesh.facet_vertices) - mesh.centroids[:, None, :]
        direction = self.r_hat if k_inc is None else self.r_hat - np.asarray(k_inc)[None, :, :]
        phase = np.einsum("nld,lqd->nlq", direction, nodes)
        integral = mesh.areas[None, :] * (np.exp(1j * k * phase) @ weights)
        self.scale = 1j / (2.0 * lam * dist) * np.exp(-1j * k * dist) * integral  # (N, L)

    def per_facet(self, j, m) -> np.ndarray:
        """Field of each facet separately, shape ``(3, N, L)``."""
        rh = self.r_hat
        j = np.asarray(j)[None, :, :]
        m = np.asarray(m)[None, :, :]
        r_x_m = np.cross(rh, m)
        j_perp = j - np.sum(rh * j, axis=2, keepdims=True) * rh
        out = self.scale[..., None] * (r_x_m - self.eta * j_perp)
        return np.moveaxis(out, 2, 0)

    def __call__(self, j, m) -> np.ndarray:
        return self.per_facet(j, m).sum(axis=2)


def radiate(mesh: ReflectorMesh, currents, observation_points, frequency,
            eps_b=1.0, order=3, k_inc=None) -> np.ndarray:
    """Scattered field ``(3, N)`` of per-facet currents ``(J, M)``."""
    if isinstance(observation_points, ImagingGrid):
        observation_points = observation_points.points
    j, m = currents
    kernel = RadiationKernel(mesh, observation_points, frequency, eps_b, order, k_inc)
    return kernel(j, m)


@dataclass(frozen=True)
class FieldDecomposition:
    """Gamma-affine split of one port's field at one frequency."""

    e_vec: np.ndarray    # (3, N)
    E_te: np.ndarray     # (3, N, L)
    E_tm: np.ndarray     # (3, N, L)
    theta_i: np.ndarray  # (L,)
    frequency: float

    def evaluate(self, gamma_te, gamma_tm) -> np.ndarray:
        return self.e_vec + self.E_te @ gamma_te + self.E_tm @ gamma_tm


def build_field_decomposition(port: Port, mesh: ReflectorMesh, grid, frequency: float,
                              amplitude: float = 1.0, eps_b: float = 1.0, order: int = 3,
                              include_direct: bool = False) -> FieldDecomposition:
    points = grid.points if isinstance(grid, ImagingGrid) else np.atleast_2d(grid)
    sample = decompose_incident(port, mesh, frequency, amplitude, eps_b)
    kernel = RadiationKernel(mesh, points, frequency, eps_b, order, sample.k_hat)
    const, te, tm = _current_parts(sample)
    e_vec = kernel(*const)
    if include_direct:
        direct, *_ = port_field(port, points, frequency, amplitude, eps_b)
        e_vec = e_vec + direct.T
    return FieldDecomposition(e_vec, kernel.per_facet(*te), kernel.per_facet(*tm),
                              sample.theta_i, float(frequency))


def direct_evaluation(port, mesh, grid, frequency, gamma_te, gamma_tm, amplitude=1.0,
                      eps_b=1.0, order=3, include_direct=False) -> np.ndarray:
    """Currents at the given gammas radiated directly (no decomposition)."""
    points = grid.points if isinstance(grid, ImagingGrid) else np.atleast_2d(grid)
    sample = decompose_incident(port, mesh, frequency, amplitude, eps_b)
    currents = equivalent_currents(sample, gamma_te, gamma_tm)
    out = radiate(mesh, currents, points, frequency, eps_b, order, sample.k_hat)
    if include_direct:
        direct, *_ = port_field(port, points, frequency, amplitude, eps_b)
        out = out + direct.T
    return out


def reflection_coefficients(eps, decomp: FieldDecomposition, thickness, eps_b=1.0,
                            physical_pairing=False):
    """Per-facet (gamma_te, gamma_tm, d_gamma_te, d_gamma_tm) for one decomposition.

    With ``physical_pairing`` the current slot whose E-field is normal to the
    plane of incidence receives the perpendicular coefficient instead of the
    one carrying the TE label.
    """
    ctx = fresnel.InterfaceContext(eps_b, eps, decomp.theta_i, decomp.frequency, thickness)
    te = fresnel.layer_response(ctx, fresnel.TE)
    tm = fresnel.layer_response(ctx, fresnel.TM)
    if physical_pairing:
        te, tm = tm, te
    return te.gamma, tm.gamma, te.d_gamma, tm.d_gamma


@dataclass(frozen=True)
class FieldMatrix:
    """Radiated fields ``G[i, m, :]`` for one side (transmit or receive).

    The derivative with respect to ``eps[p]`` is kept factored: row ``m`` of
    ``dG_i/d eps_p`` is ``E_te[u][i][:, p] * dgamma_te[u, p] + (TM analog)``
    where ``u = index[m]`` selects the (port, frequency) decomposition.
    """

    G: np.ndarray               # (3, M, N)
    index: np.ndarray           # (M,) decomposition index per measurement
    decomps: tuple              # FieldDecomposition per unique (port, frequency)
    gamma_te: np.ndarray        # (U, L)
    gamma_tm: np.ndarray
    d_gamma_te: np.ndarray
    d_gamma_tm: np.ndarray

    def derivative(self, p: int) -> np.ndarray:
        """Dense ``dG/d eps_p`` with shape ``(3, M, N)`` (testing aid)."""
        out = np.empty_like(self.G)
        for m, u in enumerate(self.index):
            d = self.decomps[u]
            out[:, m, :] = d.E_te[:, :, p] * self.d_gamma_te[u, p] + d.E_tm[:, :, p] * self.d_gamma_tm[u, p]
        return out

    def pullback(self, W) -> np.ndarray:
        """Gradient ``2 Re sum conj(W) * dG/d eps_p`` for every ``p``.

        ``W`` has the shape of ``G``; the reduction never forms ``dG`` densely.
        """
        grad = np.zeros(self.gamma_te.shape[1])
        for u, d in enumerate(self.decomps):
            rows = self.index == u
            if not np.any(rows):
                continue
            w = np.conj(W[:, rows, :].sum(axis=1))  # (3, N)
            q_te = np.einsum("in,inl->l", w, d.E_te)
            q_tm = np.einsum("in,inl->l", w, d.E_tm)
            grad += 2.0 * np.real(q_te * self.d_gamma_te[u] + q_tm * self.d_gamma_tm[u])
        return grad


def assemble_field_matrix(plan: MeasurementPlan, decomps: dict, design, side: str,
                          thickness, eps_b: float = 1.0, physical_pairing=False) -> FieldMatrix:
    """Evaluate ``G`` for every measurement at dielectric constants ``design``.

    ``decomps`` maps ``(port_index, frequency)`` to a :class:`FieldDecomposition`.
    """
    if side not in ("tx", "rx"):
        raise ValueError("side must be 'tx' or 'rx'")
    keys = []
    index = np.empty(len(plan), dtype=np.int64)
    for m, e in enumerate(plan.entries):
        key = (e.tx if side == "tx" else e.rx, e.frequency)
        if key not in keys:
            keys.append(key)
        index[m] = keys.index(key)
    eps = np.asarray(design, dtype=float)
    ds = tuple(decomps[k] for k in keys)
    coeffs = [reflection_coefficients(eps, d, thickness, eps_b, physical_pairing) for d in ds]
    g_te, g_tm, dg_te, dg_tm = (np.array(c) for c in zip(*coeffs))
    unique_fields = [d.evaluate(g_te[u], g_tm[u]) for u, d in enumerate(ds)]
    G = np.stack([unique_fields[u] for u in index], axis=1)
    return FieldMatrix(G, index, ds, g_te, g_tm, dg_te, dg_tm)


class ForwardModel:
    """Precomputed decompositions for every port/frequency of a measurement plan."""

    def __init__(self, mesh: ReflectorMesh, grid: ImagingGrid, tx_ports, rx_ports,
                 plan: MeasurementPlan, amplitude: float = 1.0, eps_b: float = 1.0,
                 order: int = 3, include_direct: bool = False, physical_pairing: bool = False):
        self.mesh = mesh
        self.grid = grid
        self.tx_ports = list(tx_ports)
        self.rx_ports = list(rx_ports)
        self.plan = plan
        self.eps_b = eps_b
        self.physical_pairing = physical_pairing
        freqs = sorted({e.frequency for e in plan.entries})
        self.decomps = {}
        for side, ports in (("tx", self.tx_ports), ("rx", self.rx_ports)):
            used = {e.tx if side == "tx" else e.rx for e in plan.entries}
            self.decomps[side] = {
                (i, f): build_field_decomposition(ports[i], mesh, grid, f, amplitude, eps_b,
                                                  order, include_direct)
                for i in sorted(used) for f in freqs
            }

    @property
    def num_facets(self) -> int:
        return self.mesh.num_facets

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.plan), self.grid.size

    def fields(self, design) -> tuple[FieldMatrix, FieldMatrix]:
        design = np.asarray(design, dtype=float)
        if design.shape != (self.num_facets,):
            raise ValueError(f"design must have {self.num_facets} entries, got {design.shape}")
        return tuple(
            assemble_field_matrix(self.plan, self.decomps[side], design, side,
                                  self.mesh.thickness, self.eps_b, self.physical_pairing)
            for side in ("tx", "rx"))


def export_fields(path, arrays: dict) -> None:
    """Write complex arrays as little-endian complex128 with a JSON sidecar.

    ``path`` gets the raw bytes (arrays concatenated in key order) and
    ``path + '.json'`` records name, shape and byte offset of each array.
    """
    path = Path(path)
    entries = []
    offset = 0
    with open(path, "wb") as fh:
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr, dtype="<c16")
            fh.write(data.tobytes())
            entries.append({"name": name, "shape": list(data.shape), "offset": offset,
                            "dtype": "complex128-le"})
            offset += data.nbytes
    Path(str(path) + ".json").write_text(json.dumps(
        {"format": "cra-field-container", "version": 1, "arrays": entries}, indent=1) + "\n")


def import_fields(path) -> dict:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    raw = path.read_bytes()
    out = {}
    for e in meta["arrays"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        out[e["name"]] = np.frombuffer(raw, dtype="<c16", count=count,
                                       offset=e["offset"]).reshape(e["shape"])
    return out
