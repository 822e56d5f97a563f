"""Polyhedral globally hyperbolic spacetimes from decorated ideal triangulations.

Each ideal triangle of the input triangulation is decorated at its corners
with a future lightlike vector u and a base point p coming from the puncture
data of an admissible representation.  The chart over a triangle is

    P(t, alpha, beta) = t (alpha . u) + kappa (beta . u) + beta . p

and the actual developing chart blends the two simplex slots through a
hexagonal blend phi: dev_hat(t, alpha) = P(t, phi(alpha), alpha).  For kappa
large enough the map is an orientation-preserving immersion with spacelike
constant-t leaves; a sampled certification record stores the margins achieved.

Around each puncture the charts assemble into a fan of half-planes attached
to a lightlike axis; walking the fan gives strictly increasing angles whose
period Theta is the rotational part of the peripheral holonomy.  A spear
neighborhood (cone head plus cylindrical shaft around the axis) is certified
inside the fan by sampled prism membership, which is what licenses detaching
and re-attaching the singular fibers.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .minkowski import (
    AffineIsometry,
    GeometryError,
    LinearIsometry,
    minkowski_inner,
    rotation_about_t,
)
from .models import TWO_PI, axis_deck_generator, dev0_array, dev0_inverse, h_ell_coords
from .representations import (
    AdmissibilityReport,
    AffineRepresentation,
    IdealTriangulationData,
    InvalidTriangulation,
    NotAdmissible,
    check_admissible,
    invert_word,
    peripheral_fixed_data,
)
from .serialize import canonical_dumps

BLEND_THRESHOLD = 2.0 / 3.0


class DegenerateDecoration(GeometryError):
    """Corner lightlike vectors of a triangle are (nearly) linearly dependent."""


class KappaSearchExhausted(GeometryError):
    """Doubling search for kappa ran out before certification succeeded."""


class FaceMismatch(GeometryError):
    """Glued faces disagree beyond tolerance: decoration or gluing data is wrong."""


class NonMonotoneAngles(GeometryError):
    """Puncture fan angles failed strict monotonicity or periodicity."""


class SpearNotFound(GeometryError):
    """No sampled radius gave a spear inside the chart fan."""


def as_barycentric(alpha, tol: float = 1e-12) -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    if a.shape != (3,) or np.any(a < -tol) or abs(float(a.sum()) - 1.0) > tol:
        raise ValueError(f"not a barycentric point: {alpha}")
    return a


@dataclass(frozen=True)
class DecoratedSimplex:
    """One fundamental-domain triangle with corner decorations in vertex order.

    u rows are future lightlike (t component 1 at base corners, group
    translates elsewhere); the ordered triple must be a direct basis.
    """

    triangle: int
    vertices: tuple[str, str, str]
    u: np.ndarray  # (3, 3), rows u_1, u_2, u_3
    p: np.ndarray  # (3, 3), rows p_1, p_2, p_3
    word: str = ""

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        p = np.array(self.p, dtype=float)
        det = float(np.linalg.det(u))
        if det <= 1e-9:
            raise DegenerateDecoration(
                f"triangle {self.triangle}: corner vectors not a direct basis (det={det!r})"
            )
        u.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "p", p)

    def translated(self, rep: AffineRepresentation, word: str) -> "DecoratedSimplex":
        g = rep.evaluate(word)
        return DecoratedSimplex(
            self.triangle,
            self.vertices,
            (g.linear.matrix @ self.u.T).T,
            np.stack([g.apply(row) for row in self.p]),
            word=word,
        )


class HexagonBlend:
    """Simplex self-map phi built from the ramp h(x) = x / (2/3 - x).

    phi = e_i on the corner plateau alpha_i >= 2/3; elsewhere phi_i
    proportional to h(alpha_i), renormalized to sum 1.  The ramp vanishes at 0
    (edges are preserved), diverges at 2/3 (continuity with the plateau), and
    the normalized map restricts to a bijection from the open hexagon
    {all alpha_i < 2/3} onto the simplex minus its vertices.
    """

    name = "rational-ramp"
    threshold = BLEND_THRESHOLD

    def __call__(self, alpha) -> np.ndarray:
        a = np.asarray(alpha, dtype=float)
        single = a.ndim == 1
        a = np.atleast_2d(a)
        out = np.zeros_like(a)
        top = np.argmax(a, axis=1)
        plateau = a[np.arange(len(a)), top] >= self.threshold
        out[plateau, top[plateau]] = 1.0
        rest = ~plateau
        if np.any(rest):
            h = a[rest] / (self.threshold - a[rest])
            out[rest] = h / h.sum(axis=1, keepdims=True)
        return out[0] if single else out

    def partials(self, alpha) -> np.ndarray:
        """Unconstrained partial derivatives d phi_k / d alpha_j, shape (..., 3, 3).

        Zero on the plateaus; the seams alpha_i = 2/3 take the plateau branch
        (one-sided value).  Callers sampling derivatives stay off the seams.
        """
        a = np.atleast_2d(np.asarray(alpha, dtype=float))
        n = len(a)
        out = np.zeros((n, 3, 3))
        top = np.argmax(a, axis=1)
        rest = a[np.arange(n), top] < self.threshold
        if np.any(rest):
            ar = a[rest]
            h = ar / (self.threshold - ar)
            hp = self.threshold / (self.threshold - ar) ** 2
            s = h.sum(axis=1, keepdims=True)
            # d(h_k/S)/da_j = delta_kj hp_j / S - h_k hp_j / S^2
            term = np.einsum("nk,nj->nkj", h, hp) / (s**2)[:, :, None]
            diag = np.zeros_like(term)
            idx = np.arange(3)
            diag[:, idx, idx] = hp / s
            out[rest] = diag - term
        return out if np.asarray(alpha).ndim > 1 else out[0]

    def invert(self, phi, iters: int = 200) -> np.ndarray:
        """Inverse of the hexagon restriction: the alpha in H with phi(alpha) = phi."""
        f = as_barycentric(phi)
        if np.max(f) >= 1.0 - 1e-15:
            raise ValueError("vertices are not in the image of the open hexagon")

        def total(lam: float) -> float:
            y = lam * f
            return float(np.sum(self.threshold * y / (1.0 + y)))

        lo, hi = 0.0, 1.0
        while total(hi) < 1.0:
            hi *= 2.0
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if total(mid) < 1.0:
                lo = mid
            else:
                hi = mid
        y = 0.5 * (lo + hi) * f
        return self.threshold * y / (1.0 + y)

    def to_json(self) -> dict:
        return {"name": self.name, "threshold": self.threshold}


def make_blend() -> HexagonBlend:
    return HexagonBlend()


def p_map(sx: DecoratedSimplex, t: float, alpha, beta, kappa: float) -> np.ndarray:
    """The ruled chart: t-scaled alpha slot over u, affine beta slot over (kappa u + p)."""
    a = as_barycentric(alpha)
    b = as_barycentric(beta)
    return (t * a + kappa * b) @ sx.u + b @ sx.p


def dev_map(sx: DecoratedSimplex, t: float, alpha, kappa: float) -> np.ndarray:
    return p_map(sx, t, alpha, alpha, kappa)


def dev_hat(sx: DecoratedSimplex, t: float, alpha, kappa: float,
            blend: HexagonBlend) -> np.ndarray:
    a = as_barycentric(alpha)
    return p_map(sx, t, blend(a), a, kappa)


def dev_hat_points(sx: DecoratedSimplex, t, alpha, kappa: float,
                   blend: HexagonBlend) -> np.ndarray:
    """Vectorized dev_hat: t (n,), alpha (n, 3) -> points (n, 3)."""
    t = np.asarray(t, dtype=float)
    a = np.asarray(alpha, dtype=float)
    phi = blend(a)
    return (t[:, None] * phi + kappa * a) @ sx.u + a @ sx.p


def dev_hat_jacobians(sx: DecoratedSimplex, t, alpha, kappa: float,
                      blend: HexagonBlend) -> np.ndarray:
    """Jacobians of dev_hat in chart coordinates (t, a, b), alpha = (1-a-b, a, b).

    Returns (n, 3, 3) with columns (d/dt, d/da, d/db).
    """
    t = np.asarray(t, dtype=float)
    a = np.asarray(alpha, dtype=float)
    phi = blend(a)
    dphi = blend.partials(a)
    col_t = phi @ sx.u
    d_a = dphi[:, :, 1] - dphi[:, :, 0]
    d_b = dphi[:, :, 2] - dphi[:, :, 0]
    col_a = t[:, None] * (d_a @ sx.u) + kappa * (sx.u[1] - sx.u[0]) + (sx.p[1] - sx.p[0])
    col_b = t[:, None] * (d_b @ sx.u) + kappa * (sx.u[2] - sx.u[0]) + (sx.p[2] - sx.p[0])
    return np.stack([col_t, col_a, col_b], axis=-1)


def leaf_gram(sx: DecoratedSimplex, t, kappa: float) -> np.ndarray:
    """Inner-product matrix of the constant-t leaf edges; independent of alpha.

    e_k = (t + kappa)(u_{k+1} - u_1) + p_{k+1} - p_1.  Spacelike leaf means
    positive definite.  Vectorized over t: returns (..., 2, 2).
    """
    t = np.asarray(t, dtype=float)
    s = (t + kappa)[..., None]
    e1 = s * (sx.u[1] - sx.u[0]) + (sx.p[1] - sx.p[0])
    e2 = s * (sx.u[2] - sx.u[0]) + (sx.p[2] - sx.p[0])
    g11 = minkowski_inner(e1, e1)
    g12 = minkowski_inner(e1, e2)
    g22 = minkowski_inner(e2, e2)
    out = np.stack(
        [np.stack([g11, g12], axis=-1), np.stack([g12, g22], axis=-1)], axis=-2
    )
    return out


def _gram_min_eig(g: np.ndarray) -> np.ndarray:
    tr = g[..., 0, 0] + g[..., 1, 1]
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    disc = np.sqrt(np.maximum((0.5 * tr) ** 2 - det, 0.0))
    return 0.5 * tr - disc


@dataclass(frozen=True)
class BuildSettings:
    """Sampling and tolerance knobs; defaults meet the certification contracts."""

    margin: float = 1e-6
    max_doublings: int = 40
    t_min: float = 0.1
    t_max: float = 10.0
    t_count: int = 12
    bary_n: int = 32
    equiv_t_count: int = 10
    equiv_edge_count: int = 10
    equiv_tol: float = 1e-8
    fan_tol: float = 1e-8
    spear_max_shrinks: int = 25
    spear_r_samples: int = 10
    spear_theta_samples: int = 16
    with_spears: bool = True

    def to_json(self) -> dict:
        return {
            "margin": self.margin,
            "max_doublings": self.max_doublings,
            "t_min": self.t_min,
            "t_max": self.t_max,
            "t_count": self.t_count,
            "bary_n": self.bary_n,
            "equiv_t_count": self.equiv_t_count,
            "equiv_edge_count": self.equiv_edge_count,
            "equiv_tol": self.equiv_tol,
            "fan_tol": self.fan_tol,
            "spear_max_shrinks": self.spear_max_shrinks,
            "spear_r_samples": self.spear_r_samples,
            "spear_theta_samples": self.spear_theta_samples,
            "with_spears": self.with_spears,
        }

    @classmethod
    def from_json(cls, d) -> "BuildSettings":
        return cls(**d)


@dataclass(frozen=True)
class CertificationRecord:
    """Sampled immersion/spacelike-leaf certificate for the chosen kappa."""

    kappa: float
    kappa_initial: float
    doublings: int
    samples: int
    min_jacobian_det: float
    min_gram_eigenvalue: float
    margin: float
    equivariance_residual: float | None = None

    def to_json(self) -> dict:
        return {
            "kappa": self.kappa,
            "kappa_initial": self.kappa_initial,
            "doublings": self.doublings,
            "samples": self.samples,
            "min_jacobian_det": self.min_jacobian_det,
            "min_gram_eigenvalue": self.min_gram_eigenvalue,
            "margin": self.margin,
            "equivariance_residual": self.equivariance_residual,
        }

    @classmethod
    def from_json(cls, d) -> "CertificationRecord":
        return cls(**d)


def barycentric_grid(n: int) -> np.ndarray:
    """Interior simplex grid with asymmetric half-cell offsets.

    Offsets (0.5, 0.25) keep every coordinate (including the dependent first
    one) away from the blend seams at 2/3 and from the boundary.
    """
    pts = []
    for i in range(n):
        for j in range(n):
            a2 = (i + 0.5) / n
            a3 = (j + 0.25) / n
            a1 = 1.0 - a2 - a3
            if a1 > 0.0:
                pts.append((a1, a2, a3))
    return np.array(pts)


def _certify_once(simplices, blend, kappa, t_values, grid, margin):
    """One certification pass; returns (ok, stats dict)."""
    min_det = math.inf
    min_eig = math.inf
    worst = None
    n_samples = 0
    for sx in simplices:
        eigs = _gram_min_eig(leaf_gram(sx, t_values, kappa))
        low = float(eigs.min())
        if low < min_eig:
            min_eig = low
            if low <= margin:
                worst = ("gram", sx.triangle, float(t_values[int(np.argmin(eigs))]))
        for t in t_values:
            ts = np.full(len(grid), t)
            dets = np.linalg.det(dev_hat_jacobians(sx, ts, grid, kappa, blend))
            n_samples += len(grid)
            low = float(dets.min())
            if low < min_det:
                min_det = low
                if low <= margin:
                    k = int(np.argmin(dets))
                    worst = ("jacobian", sx.triangle, float(t), tuple(grid[k]))
    ok = min_det > margin and min_eig > margin
    return ok, {
        "samples": n_samples,
        "min_jacobian_det": min_det,
        "min_gram_eigenvalue": min_eig,
        "worst": worst,
    }


def choose_kappa(simplices, blend: HexagonBlend,
                 settings: BuildSettings = BuildSettings()) -> CertificationRecord:
    """Doubling search for kappa with a sampled certificate.

    Starts at 1 + max corner ||p|| and doubles until, on the whole sample
    grid, the chart Jacobian determinant and the smallest leaf-Gram eigenvalue
    both clear the margin.
    """
    kappa0 = 1.0 + max(
        (float(np.linalg.norm(row)) for sx in simplices for row in sx.p), default=0.0
    )
    t_values = np.geomspace(settings.t_min, settings.t_max, settings.t_count)
    grid = barycentric_grid(settings.bary_n)
    kappa = kappa0
    last = None
    for doubling in range(settings.max_doublings + 1):
        ok, stats = _certify_once(simplices, blend, kappa, t_values, grid, settings.margin)
        if ok:
            return CertificationRecord(
                kappa=kappa,
                kappa_initial=kappa0,
                doublings=doubling,
                samples=stats["samples"],
                min_jacobian_det=stats["min_jacobian_det"],
                min_gram_eigenvalue=stats["min_gram_eigenvalue"],
                margin=settings.margin,
            )
        last = stats
        kappa *= 2.0
    raise KappaSearchExhausted(
        f"no kappa certified after {settings.max_doublings} doublings from {kappa0}; "
        f"worst sample {last['worst']}"
    )


@dataclass(frozen=True)
class SingularFiber:
    """One puncture's singular line: base vertex, supporting lightlike line, holonomy."""

    puncture: str
    base_vertex: str
    line_point: np.ndarray
    line_direction: np.ndarray
    present: bool = True

    def to_json(self) -> dict:
        return {
            "puncture": self.puncture,
            "base_vertex": self.base_vertex,
            "line_point": [float(x) for x in self.line_point],
            "line_direction": [float(x) for x in self.line_direction],
            "present": self.present,
        }

    @classmethod
    def from_json(cls, d) -> "SingularFiber":
        return cls(
            d["puncture"],
            d["base_vertex"],
            np.array(d["line_point"], dtype=float),
            np.array(d["line_direction"], dtype=float),
            bool(d["present"]),
        )


@dataclass(frozen=True)
class FanEntry:
    """One corner of the fan walk: the half-plane through the neighbor decoration."""

    index: int
    triangle: int
    vertex: str
    word: str
    u: np.ndarray      # neighbor lightlike vector in the cover
    anchor: np.ndarray  # kappa u + p of the neighbor corner in the cover
    theta: float


@dataclass(frozen=True)
class PunctureGeometry:
    """Developed fan around one puncture in axis-adapted coordinates.

    theta values cover two periods plus one entry (2r + 1 angles); Theta is
    the holonomy angle advance per period.  ell = Theta / 2pi is the
    hyperbolic rescaling that normalizes the period to 2pi.
    """

    puncture: str
    base_vertex: str
    frame: LinearIsometry
    line_point: np.ndarray
    line_direction: np.ndarray
    anchor: np.ndarray
    fan: tuple[FanEntry, ...]
    r: int
    theta: tuple[float, ...]
    Theta: float
    ell: float
    holonomy_residual: float

    @property
    def theta_normalized(self) -> tuple[float, ...]:
        return tuple(v / self.ell for v in self.theta)

    def to_json(self) -> dict:
        return {
            "puncture": self.puncture,
            "base_vertex": self.base_vertex,
            "r": self.r,
            "theta": list(self.theta),
            "Theta": self.Theta,
            "ell": self.ell,
            "theta_normalized": list(self.theta_normalized),
            "Theta_normalized": TWO_PI,
            "holonomy_residual": self.holonomy_residual,
        }


@dataclass(frozen=True)
class SpearDescriptor:
    """Certified spear around a singular fiber, in normalized axis coordinates.

    The vertex sits on the axis; the head is the cone piece
    tau = vertex_tau + r/2 over 0 < r < R, the shaft is the cylinder r = R
    from tau = vertex_tau + R/2 upward.
    """

    puncture: str
    vertex_tau: float
    radius: float
    ell: float
    samples: int

    @property
    def ring_tau(self) -> float:
        return self.vertex_tau + 0.5 * self.radius

    def head_tau(self, r: float) -> float:
        return self.vertex_tau + 0.5 * r

    def contains(self, point, tol: float = 1e-12) -> bool:
        tau, r, _ = point
        return r <= self.radius + tol and tau - 0.5 * r >= self.vertex_tau - tol

    def to_json(self) -> dict:
        return {
            "puncture": self.puncture,
            "vertex_tau": self.vertex_tau,
            "radius": self.radius,
            "ring_tau": self.ring_tau,
            "ell": self.ell,
            "samples": self.samples,
            "head": "tau = vertex_tau + r/2 for 0 < r < radius",
            "shaft": "r = radius, tau >= ring_tau",
        }

    @classmethod
    def from_json(cls, d) -> "SpearDescriptor":
        return cls(
            d["puncture"], float(d["vertex_tau"]), float(d["radius"]),
            float(d["ell"]), int(d["samples"]),
        )


@dataclass
class PolyhedralSpacetime:
    """A built spacetime: decorated charts, kappa, blend, fibers, certificates."""

    representation: AffineRepresentation
    triangulation: IdealTriangulationData
    decorations_u: dict[str, np.ndarray]
    decorations_p: dict[str, np.ndarray]
    simplices: list[DecoratedSimplex]
    kappa: float
    blend: HexagonBlend
    fibers: dict[str, SingularFiber]
    certification: CertificationRecord
    settings: BuildSettings
    fans: dict[str, PunctureGeometry] = field(default_factory=dict)
    spears: dict[str, SpearDescriptor] = field(default_factory=dict)

    @property
    def admissibility(self) -> AdmissibilityReport:
        return check_admissible(self.representation)

    def simplex(self, index: int) -> DecoratedSimplex:
        return self.simplices[index]

    def to_json(self) -> dict:
        return {
            "format": "spacetime-bundle",
            "version": 1,
            "representation": self.representation.to_json(),
            "triangulation": self.triangulation.to_json(),
            "decorations": {
                v: {
                    "u": [float(x) for x in self.decorations_u[v]],
                    "p": [float(x) for x in self.decorations_p[v]],
                }
                for v in sorted(self.decorations_u)
            },
            "kappa": self.kappa,
            "blend": self.blend.to_json(),
            "certification": self.certification.to_json(),
            "fibers": {k: f.to_json() for k, f in sorted(self.fibers.items())},
            "fans": {k: f.to_json() for k, f in sorted(self.fans.items())},
            "spears": {k: s.to_json() for k, s in sorted(self.spears.items())},
            "settings": self.settings.to_json(),
        }

    def dumps(self) -> str:
        return canonical_dumps(self.to_json())

    @classmethod
    def from_json(cls, d) -> "PolyhedralSpacetime":
        if d.get("format") != "spacetime-bundle":
            raise ValueError("not a spacetime bundle")
        rep = AffineRepresentation.from_json(d["representation"])
        tri = IdealTriangulationData.from_json(d["triangulation"])
        settings = BuildSettings.from_json(d["settings"])
        dec_u, dec_p, _ = decorate_vertices(rep, tri)
        for v, entry in d["decorations"].items():
            if (
                np.abs(dec_u[v] - np.array(entry["u"])).max() > 1e-9
                or np.abs(dec_p[v] - np.array(entry["p"])).max() > 1e-9
            ):
                raise InvalidTriangulation(f"stored decoration for {v} does not replay")
        simplices = decorate_simplices(tri, dec_u, dec_p)
        st = cls(
            representation=rep,
            triangulation=tri,
            decorations_u=dec_u,
            decorations_p=dec_p,
            simplices=simplices,
            kappa=float(d["kappa"]),
            blend=make_blend(),
            fibers={k: SingularFiber.from_json(v) for k, v in d["fibers"].items()},
            certification=CertificationRecord.from_json(d["certification"]),
            settings=settings,
        )
        st.fans = {k: puncture_geometry(st, k) for k in d["fans"]}
        st.spears = {k: SpearDescriptor.from_json(v) for k, v in d["spears"].items()}
        return st


def decorate_vertices(
    rep: AffineRepresentation, tri: IdealTriangulationData, tol: float = 1e-6
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray], dict[str, str]]:
    """Assign (u, p) to every triangulation vertex, equivariantly.

    Base vertices (one per puncture, located at the fixed boundary point of
    their peripheral) carry the peripheral fixed data; the rest is propagated
    through the gluing words.  Revisits must agree, which pins the input
    convention: gluing words multiply positions on the left.  Returns the
    decorations and the base vertex chosen per puncture.
    """
    fixed = peripheral_fixed_data(rep)
    base_of = {}
    for name, data in fixed.items():
        xi = data.boundary_position
        candidates = sorted(
            v for v, cls_ in tri.vertex_class.items()
            if cls_ == name and _boundary_close(tri.positions[v], xi, tol)
        )
        if not candidates:
            raise InvalidTriangulation(
                f"puncture {name}: no vertex at its fixed boundary point {xi!r}"
            )
        base_of[name] = candidates[0]

    dec_u: dict[str, np.ndarray] = {}
    dec_p: dict[str, np.ndarray] = {}
    for name, v in base_of.items():
        dec_u[v] = fixed[name].u
        dec_p[v] = fixed[name].line_point

    # Identification edges: (target vertex, source vertex, word) meaning
    # decoration(target) = word . decoration(source).
    edges: list[tuple[str, str, str]] = []
    for g in tri.gluings:
        for k in range(2):
            lv, rv = g.left[1][k], g.right[1][k]
            edges.append((lv, rv, g.word))
            edges.append((rv, lv, invert_word(g.word)))

    frontier = sorted(dec_u)
    while frontier:
        nxt = []
        for target, source, word in edges:
            if source in frontier and target not in dec_u:
                iso = rep.evaluate(word)
                dec_u[target] = iso.linear.matrix @ dec_u[source]
                dec_p[target] = iso.apply(dec_p[source])
                nxt.append(target)
        frontier = nxt
    missing = set(tri.vertex_class) - set(dec_u)
    if missing:
        raise InvalidTriangulation(
            f"vertices unreachable from base points: {sorted(missing)}"
        )
    for target, source, word in edges:
        iso = rep.evaluate(word)
        u_new = iso.linear.matrix @ dec_u[source]
        p_new = iso.apply(dec_p[source])
        scale = max(1.0, float(np.abs(u_new).max()), float(np.abs(p_new).max()))
        if (
            np.abs(u_new - dec_u[target]).max() > 1e-8 * scale
            or np.abs(p_new - dec_p[target]).max() > 1e-8 * scale
        ):
            raise InvalidTriangulation(
                f"decoration of vertex {target} is inconsistent across gluings"
            )
    return dec_u, dec_p, base_of


def _boundary_close(a: float, b: float, tol: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return math.isinf(a) and math.isinf(b)
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def decorate_simplices(
    tri: IdealTriangulationData,
    dec_u: dict[str, np.ndarray],
    dec_p: dict[str, np.ndarray],
) -> list[DecoratedSimplex]:
    return [
        DecoratedSimplex(
            i, t, np.stack([dec_u[v] for v in t]), np.stack([dec_p[v] for v in t])
        )
        for i, t in enumerate(tri.triangles)
    ]


def verify_face_equivariance(
    rep: AffineRepresentation,
    tri: IdealTriangulationData,
    simplices: list[DecoratedSimplex],
    kappa: float,
    blend: HexagonBlend,
    settings: BuildSettings,
) -> float:
    """Max residual of dev_hat matching across glued faces; raises FaceMismatch."""
    t_values = np.geomspace(settings.t_min, settings.t_max, settings.equiv_t_count)
    s_values = (np.arange(settings.equiv_edge_count) + 0.5) / settings.equiv_edge_count
    worst = 0.0
    for g in tri.gluings:
        (li, lpair), (ri, rpair) = g.left, g.right
        iso = rep.evaluate(g.word)
        sl, sr = simplices[li], simplices[ri]
        il = [sl.vertices.index(v) for v in lpair]
        ir = [sr.vertices.index(v) for v in rpair]
        for s in s_values:
            al = np.zeros(3)
            al[il[0]], al[il[1]] = s, 1.0 - s
            ar = np.zeros(3)
            ar[ir[0]], ar[ir[1]] = s, 1.0 - s
            xl = dev_hat_points(sl, t_values, np.tile(al, (len(t_values), 1)), kappa, blend)
            xr = dev_hat_points(sr, t_values, np.tile(ar, (len(t_values), 1)), kappa, blend)
            xr = (iso.linear.matrix @ xr.T).T + iso.translation
            res = float(np.abs(xl - xr).max())
            worst = max(worst, res)
    if worst > settings.equiv_tol:
        raise FaceMismatch(f"glued faces disagree by {worst:.3e}")
    return worst


def build(
    rep: AffineRepresentation,
    tri: IdealTriangulationData,
    settings: BuildSettings = BuildSettings(),
) -> PolyhedralSpacetime:
    """Full pipeline: admissibility gate, decoration, blend, kappa, verification."""
    report = check_admissible(rep)
    if not report.verdict:
        raise NotAdmissible(report)
    dec_u, dec_p, base_of = decorate_vertices(rep, tri)
    simplices = decorate_simplices(tri, dec_u, dec_p)
    blend = make_blend()
    cert = choose_kappa(simplices, blend, settings)
    residual = verify_face_equivariance(rep, tri, simplices, cert.kappa, blend, settings)
    cert = replace(cert, equivariance_residual=residual)
    fixed = peripheral_fixed_data(rep)
    fibers = {}
    for name, data in fixed.items():
        fibers[name] = SingularFiber(
            puncture=name,
            base_vertex=base_of[name],
            line_point=data.line_point,
            line_direction=data.u,
        )
    st = PolyhedralSpacetime(
        representation=rep,
        triangulation=tri,
        decorations_u=dec_u,
        decorations_p=dec_p,
        simplices=simplices,
        kappa=cert.kappa,
        blend=blend,
        fibers=fibers,
        certification=cert,
        settings=settings,
    )
    st.fans = {name: puncture_geometry(st, name) for name in fibers}
    if settings.with_spears:
        st.spears = {name: find_spear(st, name) for name in fibers}
    return st


def _axis_angle(frame_inv: np.ndarray, d: np.ndarray) -> float:
    """theta of a direction transverse to the axis, in the rotated standard frame."""
    w = frame_inv @ d
    gap = w[0] - w[1]
    if gap <= 0:
        raise NonMonotoneAngles(
            "fan direction does not point into the future side of the axis"
        )
    return float(-w[2] / gap)


def _fan_walk(st: PolyhedralSpacetime, puncture: str, crossings: int):
    """Walk triangle copies around a puncture in increasing fan angle.

    The first triangle contributes its two non-base corners ordered by angle;
    each edge crossing afterwards contributes the single new corner of the
    triangle entered.  Exit edges are chosen geometrically (always through the
    most recent corner), so the stored vertex order of triangles is irrelevant.
    Returns the entries, the accumulated frame and state after each crossing,
    and the starting state.
    """
    tri = st.triangulation
    rep = st.representation
    fiber = st.fibers[puncture]
    base = fiber.base_vertex
    orbit = {v for v, c in tri.vertex_class.items() if c == puncture}
    anchor = st.kappa * fiber.line_direction + fiber.line_point
    psi = math.atan2(fiber.line_direction[2], fiber.line_direction[1])
    frame_inv = rotation_about_t(psi).inverse().matrix

    def corner(frame: AffineIsometry, tri_i: int, v: str, word: str):
        u_n = frame.linear.matrix @ st.decorations_u[v]
        q_n = frame.apply(st.kappa * st.decorations_u[v] + st.decorations_p[v])
        return (tri_i, v, word, u_n, q_n, _axis_angle(frame_inv, q_n - anchor))

    start = min(i for i, t in enumerate(tri.triangles) if base in t)
    cur_tri, cur_v = start, base
    frame = AffineIsometry.identity()
    words: list[str] = []
    entries = sorted(
        (corner(frame, cur_tri, w, "") for w in tri.triangles[cur_tri] if w != cur_v),
        key=lambda e: e[5],
    )
    exit_v = entries[-1][1]
    frames_after = []
    for _ in range(crossings):
        g, is_left = tri.gluing_at(cur_tri, frozenset((cur_v, exit_v)))
        if is_left:
            pair_from, (next_tri, pair_to) = g.left[1], g.right
            word = g.word
        else:
            pair_from, (next_tri, pair_to) = g.right[1], g.left
            word = invert_word(g.word)
        entered = pair_to[pair_from.index(exit_v)]
        cur_v = pair_to[pair_from.index(cur_v)]
        cur_tri = next_tri
        if cur_v not in orbit:
            raise NonMonotoneAngles(
                f"fan walk left the vertex orbit of {puncture} at triangle {cur_tri}"
            )
        if word:
            frame = frame.compose(rep.evaluate(word))
            words.append(word)
        frames_after.append((frame, (cur_tri, cur_v)))
        new_corner = next(w for w in tri.triangles[cur_tri] if w not in (cur_v, entered))
        entries.append(corner(frame, cur_tri, new_corner, " ".join(words)))
        exit_v = new_corner
    return entries, frames_after, (start, base)


def puncture_geometry(st: PolyhedralSpacetime, puncture: str) -> PunctureGeometry:
    """Fan of half-planes around one singular fiber with strictly increasing angles.

    Walks the triangle corners around the puncture through the gluing words,
    maps each corner's decoration into axis-adapted coordinates, and reads
    off the angle sequence over two periods.  The holonomy advance per period
    is Theta; ell = Theta / 2pi normalizes it to 2pi.
    """
    if puncture not in st.fibers:
        raise KeyError(f"unknown puncture {puncture}")
    fiber = st.fibers[puncture]
    tri = st.triangulation
    r = sum(1 for t in tri.triangles for v in t if tri.vertex_class[v] == puncture)
    u_c = fiber.line_direction
    p_c = fiber.line_point
    anchor = st.kappa * u_c + p_c
    psi = math.atan2(u_c[2], u_c[1])
    frame = rotation_about_t(psi)

    entries, frames_after, start_state = _fan_walk(st, puncture, 2 * r - 1)
    thetas = [e[5] for e in entries]
    if not np.all(np.diff(thetas) > 0):
        raise NonMonotoneAngles(
            f"fan angles around {puncture} are not strictly increasing"
        )
    # After r crossings the walk must close up on the starting corner.
    frame_r, state_r = frames_after[r - 1]
    if state_r != start_state:
        raise NonMonotoneAngles(
            f"fan walk around {puncture} did not close after {r} corners"
        )
    Theta = thetas[r] - thetas[0]
    shifts = [thetas[n + r] - thetas[n] for n in range(len(thetas) - r)]
    if max(shifts) - min(shifts) > st.settings.fan_tol:
        raise NonMonotoneAngles(
            f"fan period around {puncture} is not constant: "
            f"spread {max(shifts) - min(shifts):.3e}"
        )
    # The period frame must be the peripheral holonomy (either orientation).
    hol = st.representation.generator(puncture)
    residual = min(
        max(
            float(np.abs(h.linear.matrix - frame_r.linear.matrix).max()),
            float(np.abs(h.translation - frame_r.translation).max()),
        )
        for h in (hol, hol.inverse())
    )
    scale = max(1.0, float(np.abs(frame_r.linear.matrix).max()))
    if residual > 10 * st.settings.fan_tol * scale:
        raise NonMonotoneAngles(
            f"fan period around {puncture} is not the peripheral holonomy "
            f"(residual {residual:.3e})"
        )
    fan = tuple(
        FanEntry(n, t_i, v, w, u, a, th)
        for n, (t_i, v, w, u, a, th) in enumerate(entries)
    )
    return PunctureGeometry(
        puncture=puncture,
        base_vertex=fiber.base_vertex,
        frame=frame,
        line_point=p_c,
        line_direction=u_c,
        anchor=anchor,
        fan=fan,
        r=r,
        theta=tuple(thetas),
        Theta=Theta,
        ell=Theta / TWO_PI,
        holonomy_residual=residual,
    )


def model_to_minkowski(pg: PunctureGeometry, point) -> np.ndarray:
    """Normalized axis coordinates (tau, r, theta) -> ambient Minkowski point."""
    tau, r, theta = (float(v) for v in point)
    x = dev0_array(*h_ell_coords(pg.ell, tau, r, theta))
    return pg.frame.matrix @ x + pg.line_point


def minkowski_to_model(pg: PunctureGeometry, x) -> tuple[float, float, float]:
    """Ambient Minkowski point in J+(axis) -> normalized axis coordinates."""
    w = pg.frame.inverse().matrix @ (np.asarray(x, dtype=float) - pg.line_point)
    p = dev0_inverse(w, tol=1e-9)
    tau, r, theta = h_ell_coords(1.0 / pg.ell, *p.coords)
    return float(tau), float(r), float(theta)


def _prism_membership(pg: PunctureGeometry, x: np.ndarray) -> tuple[bool, tuple]:
    """Is the ambient point x inside the fan prism covering its angle window?"""
    windows = [e.theta for e in pg.fan]
    d = x - pg.anchor
    gap_ok = minkowski_inner(d, pg.line_direction) < 0
    if not gap_ok:
        return False, ("outside-halfspace",)
    theta = _axis_angle(pg.frame.inverse().matrix, d)
    lo, hi = windows[0], windows[pg.r]
    span = hi - lo
    lifted = lo + ((theta - lo) % span)
    n = bisect.bisect_right(windows, lifted) - 1
    n = min(max(n, 0), pg.r - 1)
    m = np.column_stack([
        pg.line_direction,
        pg.fan[n].anchor - pg.anchor,
        pg.fan[n + 1].anchor - pg.anchor,
    ])
    deck = _deck_shift(pg, lifted - theta)
    target = deck @ (x - pg.anchor)
    try:
        t, a, b = np.linalg.solve(m, target)
    except np.linalg.LinAlgError:
        return False, ("singular-prism", n)
    ok = t > 1e-12 and a >= -1e-9 and b >= -1e-9 and a + b <= 1.0 / 3.0 + 1e-9
    return ok, (n, float(t), float(a), float(b))


def _deck_shift(pg: PunctureGeometry, dtheta_raw: float) -> np.ndarray:
    """Linear map shifting the raw axis angle by dtheta_raw around this fiber."""
    n0 = pg.frame.matrix @ axis_deck_generator() @ pg.frame.inverse().matrix
    sn = dtheta_raw * n0
    return np.eye(3) + sn + 0.5 * (sn @ sn)


def find_spear(
    st: PolyhedralSpacetime, puncture: str, fan: PunctureGeometry | None = None
) -> SpearDescriptor:
    """Halving search for a spear radius certified by boundary-sample membership.

    The vertex is pinned at the developed start of the fiber (normalized
    tau = ell_norm * kappa on the axis).  Head samples cover the cone piece,
    shaft samples cover the base ring; points further up the shaft stay inside
    because prisms are closed under adding positive multiples of the axis
    direction.
    """
    pg = fan if fan is not None else st.fans.get(puncture) or puncture_geometry(st, puncture)
    ell_norm = TWO_PI / pg.Theta
    vertex_tau = ell_norm * st.kappa
    radius = ell_norm * st.kappa
    n_r = st.settings.spear_r_samples
    n_th = st.settings.spear_theta_samples
    theta0 = pg.theta[0] / pg.ell
    thetas = theta0 + TWO_PI * (np.arange(n_th) + 0.5) / n_th
    failure = None
    for _ in range(st.settings.spear_max_shrinks + 1):
        ok = True
        samples = 0
        for r_frac in (np.arange(n_r) + 1.0) / n_r:
            r_val = r_frac * radius
            for theta in thetas:
                for tau in (vertex_tau + 0.5 * r_val,) if r_val < radius else (
                    vertex_tau + 0.5 * radius,
                    vertex_tau + 0.75 * radius,
                ):
                    x = model_to_minkowski(pg, (tau, r_val, theta))
                    inside, info = _prism_membership(pg, x)
                    samples += 1
                    if not inside:
                        ok = False
                        failure = ((tau, r_val, float(theta)), info)
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            return SpearDescriptor(
                puncture=puncture,
                vertex_tau=vertex_tau,
                radius=radius,
                ell=pg.ell,
                samples=samples,
            )
        radius *= 0.5
    raise SpearNotFound(
        f"no spear radius certified around {puncture}; last failure at {failure}"
    )


def strip_btz(st: PolyhedralSpacetime) -> PolyhedralSpacetime:
    """Mark every singular fiber absent; charts then cover only radial > 0."""
    out = replace(st)
    out.fibers = {k: replace(f, present=False) for k, f in st.fibers.items()}
    return out


def extend_btz(st: PolyhedralSpacetime) -> tuple[PolyhedralSpacetime, dict[str, str]]:
    """Re-attach the fibers whose fans admit a spear; report per puncture."""
    report = {}
    fibers = {}
    for name, fib in st.fibers.items():
        if fib.present:
            fibers[name] = fib
            report[name] = "already-present"
            continue
        try:
            find_spear(st, name)
        except (SpearNotFound, NonMonotoneAngles) as exc:
            fibers[name] = fib
            report[name] = f"left-absent: {exc}"
            continue
        fibers[name] = replace(fib, present=True)
        report[name] = "reattached"
    out = replace(st)
    out.fibers = fibers
    return out, report


def recheck_certification(st: PolyhedralSpacetime) -> bool:
    """Re-run the certification pass at the stored kappa; must still clear margins."""
    t_values = np.geomspace(st.settings.t_min, st.settings.t_max, st.settings.t_count)
    grid = barycentric_grid(st.settings.bary_n)
    ok, stats = _certify_once(
        st.simplices, st.blend, st.kappa, t_values, grid, st.certification.margin
    )
    return (
        ok
        and stats["min_jacobian_det"] == st.certification.min_jacobian_det
        and stats["min_gram_eigenvalue"] == st.certification.min_gram_eigenvalue
    )


def mesh_data(st: PolyhedralSpacetime, t_values, resolution: int):
    """Sampled leaf meshes: vertices (n, 3) and triangular faces (m, 3), deterministic."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    t_values = [float(t) for t in t_values]
    if not t_values or any(t <= 0 for t in t_values):
        raise ValueError("t values must be positive and non-empty")
    res = int(resolution)
    bary = []
    index_of = {}
    for i in range(res + 1):
        for j in range(res + 1 - i):
            k = res - i - j
            index_of[(i, j)] = len(bary)
            bary.append((i / res, j / res, k / res))
    bary = np.array(bary)
    verts = []
    faces = []
    offset = 0
    for t in t_values:
        for sx in st.simplices:
            pts = dev_hat_points(sx, np.full(len(bary), t), bary, st.kappa, st.blend)
            verts.append(pts)
            for i in range(res):
                for j in range(res - i):
                    a = index_of[(i, j)]
                    b = index_of[(i + 1, j)]
                    c = index_of[(i, j + 1)]
                    faces.append((offset + a, offset + b, offset + c))
                    if i + j < res - 1:
                        d = index_of[(i + 1, j + 1)]
                        faces.append((offset + b, offset + d, offset + c))
            offset += len(bary)
    return np.vstack(verts), faces


def export_mesh(st: PolyhedralSpacetime, t_values, resolution: int, path) -> str:
    """Write the sampled leaves as OBJ (``.obj``) or JSON (anything else)."""
    from pathlib import Path

    verts, faces = mesh_data(st, t_values, resolution)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".obj":
        lines = ["# polyhedral spacetime leaves (x y t per vertex)"]
        lines += [f"v {v[1]!r} {v[2]!r} {v[0]!r}" for v in verts]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces]
        path.write_text("\n".join(lines) + "\n")
    else:
        payload = {
            "format": "leaf-mesh",
            "t_values": [float(t) for t in t_values],
            "resolution": int(resolution),
            "vertices": [[float(c) for c in v] for v in verts],
            "faces": [list(f) for f in faces],
        }
        path.write_text(canonical_dumps(payload))
    return str(path)
