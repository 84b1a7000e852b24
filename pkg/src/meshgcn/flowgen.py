"""Synthetic airfoil flow data.

Joukowski airfoils in ideal (potential) flow have closed-form velocity fields
and a closed-form lift, which makes them a convenient stand-in for CFD data:
the regression target is known exactly.

Conventions
-----------
* The generating circle lives in the zeta-plane with centre ``mu`` and radius
  ``R = |1 - mu|`` so that it passes through the trailing-edge point zeta = 1.
* ``z = zeta + 1/zeta`` maps the circle onto the airfoil; the result is then
  translated and scaled so the physical airfoil spans x in [0, 1].
* The free stream is rotated by the angle of attack; the geometry is not.
* Circulation ``gamma`` is positive clockwise, so lift ``rho * U * gamma`` is
  positive for positive angle of attack.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import Delaunay, cKDTree

from .graph import Graph, build_graph


class GeometryError(ValueError):
    """Raised for degenerate airfoil parameters or points inside the body."""


class MeshError(RuntimeError):
    """Raised when the mesh sampler cannot reach the requested node count."""


@dataclass(frozen=True)
class AirfoilSpec:
    mu_x: float = -0.1
    mu_y: float = 0.05
    alpha_deg: float = 0.0
    u_inf: float = 1.5
    rho: float = 1.0

    def __post_init__(self):
        if self.mu_x > -1e-3:
            raise GeometryError(
                f"mu_x={self.mu_x} gives a flat plate or a self-intersecting profile; need mu_x < -1e-3"
            )
        if not (self.u_inf > 0 and self.rho > 0):
            raise GeometryError("u_inf and rho must be positive")

    @property
    def mu(self) -> complex:
        return complex(self.mu_x, self.mu_y)

    @property
    def radius(self) -> float:
        return abs(1.0 - self.mu)

    @property
    def beta(self) -> float:
        """Zero-lift angle offset (radians) set by camber."""
        return math.atan2(self.mu_y, 1.0 - self.mu_x)

    @property
    def alpha(self) -> float:
        return math.radians(self.alpha_deg)

    @property
    def leading_edge_theta(self) -> float:
        return _leading_edge(self)[0]

    @property
    def x_le(self) -> float:
        return _leading_edge(self)[1]

    @property
    def scale(self) -> float:
        """Chord of the raw Joukowski profile (trailing edge sits at z = 2)."""
        return 2.0 - self.x_le

    @property
    def circulation(self) -> float:
        """Kutta-condition circulation in the physical (unit-chord) plane."""
        return (
            4.0 * math.pi * self.u_inf * self.radius * math.sin(self.alpha + self.beta) / self.scale
        )


_LE_CACHE: dict[tuple[float, float], tuple[float, float]] = {}


def _leading_edge(spec: AirfoilSpec) -> tuple[float, float]:
    key = (spec.mu_x, spec.mu_y)
    if key in _LE_CACHE:
        return _LE_CACHE[key]
    mu, r = spec.mu, spec.radius

    def x_of(theta):
        zeta = mu + r * np.exp(1j * theta)
        return (zeta + 1.0 / zeta).real

    grid = np.linspace(0.5 * np.pi, 1.5 * np.pi, 2001)
    i = int(np.argmin(x_of(grid)))
    res = minimize_scalar(
        x_of,
        bounds=(grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]),
        method="bounded",
        options={"xatol": 1e-13},
    )
    out = (float(res.x), float(x_of(res.x)))
    _LE_CACHE[key] = out
    return out


def _to_physical(spec: AirfoilSpec, z):
    return (z - spec.x_le) / spec.scale


def _to_joukowski(spec: AirfoilSpec, w):
    return spec.x_le + spec.scale * w


def _circle_thetas(spec: AirfoilSpec, m: int) -> np.ndarray:
    """m circle angles in [0, 2pi), always hitting the trailing and leading edges."""
    t_te = -spec.beta
    t_le = spec.leading_edge_theta
    n_upper = int(round(m * (t_le - t_te) / (2 * np.pi)))
    n_upper = min(max(n_upper, 1), m - 1)
    upper = np.linspace(t_te, t_le, n_upper, endpoint=False)
    lower = np.linspace(t_le, t_te + 2 * np.pi, m - n_upper, endpoint=False)
    return np.concatenate([upper, lower])


def _circle_to_physical(spec: AirfoilSpec, theta) -> np.ndarray:
    zeta = spec.mu + spec.radius * np.exp(1j * np.asarray(theta))
    return _to_physical(spec, zeta + 1.0 / zeta)


def joukowski_boundary(spec: AirfoilSpec, m: int = 200) -> np.ndarray:
    """Closed polyline of ``m`` boundary points, counter-clockwise, unit chord on [0, 1].

    The first point is the trailing edge; the polyline is implicitly closed
    (the last point connects back to the first).
    """
    if m < 16:
        raise ValueError(f"need at least 16 boundary points, got {m}")
    w = _circle_to_physical(spec, _circle_thetas(spec, m))
    return np.column_stack([w.real, w.imag])


def _exterior_zeta(spec: AirfoilSpec, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Invert the map for physical points ``w`` (complex); returns (zeta, |zeta - mu|)."""
    z = _to_joukowski(spec, w)
    s = np.sqrt(z * z - 4.0 + 0j)
    z1 = 0.5 * (z + s)
    z2 = 0.5 * (z - s)
    d1 = np.abs(z1 - spec.mu)
    d2 = np.abs(z2 - spec.mu)
    pick = d1 >= d2
    return np.where(pick, z1, z2), np.where(pick, d1, d2)


def inside_airfoil(spec: AirfoilSpec, points, tol: float = 0.0) -> np.ndarray:
    """Boolean mask of points inside or on the airfoil (within ``tol`` in circle radius)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    _, dist = _exterior_zeta(spec, pts[:, 0] + 1j * pts[:, 1])
    return dist <= spec.radius * (1.0 + tol)


def _complex_velocity_zeta(spec: AirfoilSpec, zeta):
    """dF/dzeta for uniform flow + doublet + Kutta circulation about the circle."""
    u, a, r = spec.u_inf, spec.alpha, spec.radius
    gamma_zeta = 4.0 * math.pi * u * r * math.sin(a + spec.beta)
    dz = zeta - spec.mu
    return (
        u * (np.exp(-1j * a) - r * r * np.exp(1j * a) / (dz * dz))
        + 1j * gamma_zeta / (2.0 * math.pi * dz)
    )


def _velocity_from_zeta(spec: AirfoilSpec, zeta) -> np.ndarray:
    dwdz = _complex_velocity_zeta(spec, zeta) / (1.0 - 1.0 / (zeta * zeta))
    return np.column_stack([dwdz.real, -dwdz.imag])


def potential_velocity(spec: AirfoilSpec, points) -> np.ndarray:
    """Velocity (u, v) at physical points strictly outside the airfoil.

    Accepts a single point or an (n, 2) array and returns an (n, 2) array.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    zeta, dist = _exterior_zeta(spec, pts[:, 0] + 1j * pts[:, 1])
    bad = dist <= spec.radius * (1.0 + 1e-12)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise GeometryError(f"point {pts[i].tolist()} (index {i}) is inside or on the airfoil")
    # physical velocities equal Joukowski-plane velocities: the affine map only rescales lengths
    return _velocity_from_zeta(spec, zeta)


def lift_oracle(spec: AirfoilSpec) -> float:
    """Kutta-Joukowski lift per unit span, L = rho * U * gamma (N/m)."""
    return spec.rho * spec.u_inf * spec.circulation


def wind_axes(spec: AirfoilSpec) -> tuple[np.ndarray, np.ndarray]:
    """Unit (drag, lift) directions: parallel and normal to the free stream."""
    a = spec.alpha
    return np.array([math.cos(a), math.sin(a)]), np.array([-math.sin(a), math.cos(a)])


# ---------------------------------------------------------------- surface forces


@dataclass
class SurfacePanels:
    """Straight boundary panels with a stress tensor sampled at each midpoint.

    Arrays are indexed by panel: ``start``/``end`` (m, 2), ``normal`` (m, 2)
    outward unit normals, ``length`` (m,), ``stress`` (m, 2, 2) in Pa.
    """

    start: np.ndarray
    end: np.ndarray
    normal: np.ndarray
    length: np.ndarray
    stress: np.ndarray

    def __len__(self):
        return self.length.shape[0]


def panels_from_polyline(vertices: np.ndarray, stress: np.ndarray) -> SurfacePanels:
    """Panels of the closed counter-clockwise polyline ``vertices``."""
    start = np.asarray(vertices, dtype=float)
    end = np.roll(start, -1, axis=0)
    d = end - start
    length = np.hypot(d[:, 0], d[:, 1])
    if np.any(length <= 0):
        raise ValueError("zero-length panel")
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    return SurfacePanels(start, end, normal, length, np.asarray(stress, dtype=float))


def bernoulli_panels(spec: AirfoilSpec, m: int = 2000, p_inf: float = 0.0) -> SurfacePanels:
    """Panels on the airfoil with stress -p I, p from Bernoulli on the exact surface speed."""
    theta = _circle_thetas(spec, m)
    vertices = _circle_to_physical(spec, theta)
    vertices = np.column_stack([vertices.real, vertices.imag])
    theta_next = np.append(theta[1:], theta[0] + 2 * np.pi)
    mid = 0.5 * (theta + theta_next)
    zeta = spec.mu + spec.radius * np.exp(1j * mid)
    vel = _velocity_from_zeta(spec, zeta)
    p = p_inf + 0.5 * spec.rho * (spec.u_inf**2 - np.sum(vel * vel, axis=1))
    stress = -p[:, None, None] * np.eye(2)[None, :, :]
    return panels_from_polyline(vertices, stress)


def surface_force_integral(panels: SurfacePanels, direction, tol: float = 1e-9) -> float:
    """Sum over panels of ((stress . n) . direction) dS."""
    gap = np.max(np.abs(np.roll(panels.end, 1, axis=0) - panels.start))
    if gap > tol:
        raise ValueError(f"panels do not form a closed loop (endpoint gap {gap:.3e})")
    e = np.asarray(direction, dtype=float)
    traction = np.einsum("mij,mj->mi", panels.stress, panels.normal)
    return float(np.sum((traction @ e) * panels.length))


# ---------------------------------------------------------------- meshing


@dataclass(frozen=True)
class MeshConfig:
    """Graded random point cloud around the airfoil.

    Node density at distance d from the body is proportional to
    ``(d0 / (d + d0)) ** power``.
    """

    band: tuple[int, int] = (900, 1500)
    d0: float = 0.2
    power: float = 2.0
    x_range: tuple[float, float] = (-3.5, 6.5)
    y_range: tuple[float, float] = (-5.0, 5.0)
    clearance: float = 2e-3
    max_rounds: int = 200
    batch: int = 2048
    boundary_points: int = 400
    # proposal mixture: this fraction of candidates comes from the near-body box
    near_fraction: float = 0.7
    near_margin: float = 1.0

    def __post_init__(self):
        lo, hi = self.band
        if not (100 <= lo <= hi <= 10000):
            raise ValueError(f"node band {self.band} must satisfy 100 <= lo <= hi <= 10000")


def _graded_points(spec: AirfoilSpec, config: MeshConfig, target: int, rng: np.random.Generator):
    """Rejection sampling from the graded density with a uniform + near-box proposal."""
    body = joukowski_boundary(spec, config.boundary_points)
    tree = cKDTree(body)
    (x0, x1), (y0, y1) = config.x_range, config.y_range
    mg = config.near_margin
    bx0, bx1 = max(x0, -mg), min(x1, 1.0 + mg)
    by0, by1 = max(y0, -mg), min(y1, mg)
    area = (x1 - x0) * (y1 - y0)
    area_near = (bx1 - bx0) * (by1 - by0)
    w = 1.0 - config.near_fraction
    q_out = w / area
    q_in = q_out + config.near_fraction / area_near
    # envelope: density <= 1 inside the box; outside it d is at least the body-to-box-edge gap
    gap = min(
        body[:, 0].min() - bx0, bx1 - body[:, 0].max(), body[:, 1].min() - by0, by1 - body[:, 1].max()
    )
    f_out_max = (config.d0 / (max(gap, 0.0) + config.d0)) ** config.power
    envelope = max(1.0 / q_in, f_out_max / q_out)

    accepted = []
    count = 0
    for _ in range(config.max_rounds):
        n_near = rng.binomial(config.batch, config.near_fraction)
        cand = np.concatenate([
            np.column_stack([rng.uniform(bx0, bx1, n_near), rng.uniform(by0, by1, n_near)]),
            np.column_stack([rng.uniform(x0, x1, config.batch - n_near),
                             rng.uniform(y0, y1, config.batch - n_near)]),
        ])
        # mixed order so truncating the last batch does not favour either component
        cand = cand[rng.permutation(cand.shape[0])]
        in_box = (cand[:, 0] >= bx0) & (cand[:, 0] <= bx1) & (cand[:, 1] >= by0) & (cand[:, 1] <= by1)
        q = np.where(in_box, q_in, q_out)
        d, _ = tree.query(cand)
        f = (config.d0 / (d + config.d0)) ** config.power
        keep = (rng.random(cand.shape[0]) * envelope * q < f) & (d > config.clearance)
        cand = cand[keep]
        if cand.size:
            cand = cand[~inside_airfoil(spec, cand, tol=1e-9)]
        accepted.append(cand)
        count += cand.shape[0]
        if count >= target:
            return np.concatenate(accepted)[:target]
    raise MeshError(f"only {count} of {target} nodes accepted after {config.max_rounds} rounds")


def sample_mesh(spec: AirfoilSpec, config: MeshConfig = MeshConfig(), seed=0):
    """Random graded point cloud plus Delaunay connectivity.

    The node count is drawn uniformly from ``config.band``. Returns
    ``(points, edges)`` where edges is an (e, 2) array of undirected pairs
    (u < v). Triangles with centroid or an edge midpoint inside the airfoil
    are dropped.
    """
    rng = np.random.default_rng(seed)
    lo, hi = config.band
    target = int(rng.integers(lo, hi + 1))
    points = _graded_points(spec, config, target, rng)

    tri = Delaunay(points).simplices
    corners = points[tri]
    probes = [corners.mean(axis=1)]
    for a, b in ((0, 1), (1, 2), (2, 0)):
        probes.append(0.5 * (corners[:, a] + corners[:, b]))
    bad = np.zeros(tri.shape[0], dtype=bool)
    for probe in probes:
        bad |= inside_airfoil(spec, probe)
    tri = tri[~bad]
    pairs = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    pairs.sort(axis=1)
    edges = np.unique(pairs, axis=0)
    return points, edges


# ---------------------------------------------------------------- datasets


@dataclass(frozen=True)
class SpecRanges:
    mu_x: tuple[float, float] = (-0.15, -0.05)
    mu_y: tuple[float, float] = (0.0, 0.12)
    alpha_deg: tuple[float, float] = (-10.0, 10.0)
    u_inf: float = 1.5
    rho: float = 1.0

    def draw(self, rng: np.random.Generator) -> AirfoilSpec:
        return AirfoilSpec(
            mu_x=float(rng.uniform(*self.mu_x)),
            mu_y=float(rng.uniform(*self.mu_y)),
            alpha_deg=float(rng.uniform(*self.alpha_deg)),
            u_inf=self.u_inf,
            rho=self.rho,
        )


@dataclass
class FlowSample:
    graph: Graph
    target: float
    spec: AirfoilSpec
    seed: int
    meta: dict = field(default_factory=dict)


def _sample_seeds(seed: int, n: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def generate_sample(seed: int, ranges: SpecRanges = SpecRanges(), mesh: MeshConfig = MeshConfig()):
    rng = np.random.default_rng(seed)
    spec = ranges.draw(rng)
    points, edges = sample_mesh(spec, mesh, seed=rng)
    vel = potential_velocity(spec, points)
    graph = build_graph(vel, edges, positions=points)
    meta = {k: float(v) for k, v in asdict(spec).items()}
    meta["num_nodes"] = graph.num_nodes
    meta["seed"] = seed
    return FlowSample(graph=graph, target=lift_oracle(spec), spec=spec, seed=seed, meta=meta)


def _generate_indexed(args):
    i, seed, ranges, mesh = args
    try:
        return generate_sample(seed, ranges, mesh)
    except Exception as exc:  # re-raised with the sample index attached
        raise RuntimeError(f"sample {i} (seed {seed}) failed: {exc}") from exc


def iter_samples(n: int, ranges: SpecRanges = SpecRanges(), mesh: MeshConfig = MeshConfig(),
                 seed: int = 0, workers: int = 1):
    """Yield ``n`` FlowSamples in index order; sample i uses a seed spawned from ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    jobs = [(i, s, ranges, mesh) for i, s in enumerate(_sample_seeds(seed, n))]
    if workers <= 1:
        for job in jobs:
            yield _generate_indexed(job)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            yield from pool.map(_generate_indexed, jobs, chunksize=8)


def generate_dataset(n: int, ranges: SpecRanges = SpecRanges(), mesh: MeshConfig = MeshConfig(),
                     seed: int = 0, workers: int = 1):
    """Generate ``n`` samples as a :class:`meshgcn.storage.Dataset`."""
    from .storage import Dataset, Record

    records = [
        Record(id=i, graph=s.graph, target=s.target, metadata=s.meta)
        for i, s in enumerate(iter_samples(n, ranges, mesh, seed, workers))
    ]
    return Dataset(records)


def airfoil_thickness(boundary: np.ndarray) -> float:
    """Maximum vertical extent of a boundary polyline."""
    return float(boundary[:, 1].max() - boundary[:, 1].min())
