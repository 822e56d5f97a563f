"""Spacelike cap surfaces inside a spear and causal-curve intersection counts.

Everything here lives in normalized model coordinates (tau, radial, angular)
of the quotient around one singular fiber: the spear is the region
tau - r/2 >= vertex_tau, r <= R.  A cap is the graph of a function
tau_Sigma(r, theta) over the disk r <= R matching a prescribed boundary
profile tau^R(theta) at r = R.  Two extensions are provided:

  * complete: tau = tau^R(theta) + M (1/r - 1/R), which diverges at the
    puncture and is metrically complete (delta >= C^2 / r^2 with C >= 1);
  * compact: tau = ((2r - R)/R)^2 tau^R(theta) + M (1/r - 1/R) on [R/2, R]
    and the constant M/R on [0, R/2], which caps the axis at finite height.

The spacelike condition is delta = 1 - 2 dtau/dr - ((1/r) dtau/dtheta)^2 > 0,
since the induced metric is delta dr^2 + ((1/r) tau_theta dr - r dtheta)^2
with determinant delta r^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .minkowski import GeometryError
from .models import TWO_PI

DEFAULT_SAMPLES = 10_000


class OnSeam(GeometryError):
    """Derivative requested exactly on the non-smooth seam of a compact cap."""


class NotCausal(GeometryError):
    """A polyline segment is not future causal for the quotient metric."""


class Tangency(GeometryError):
    """The curve grazes the cap within tolerance; the count is not decidable."""


class MSearchExhausted(GeometryError):
    """Doubling search for the compact-cap slope constant ran out."""


@dataclass(frozen=True)
class BoundaryProfile:
    """Trigonometric polynomial boundary height tau^R(theta) at radius R.

    value = const + sum cos[k] cos((k+1) theta) + sum sin[k] sin((k+1) theta).
    Whether the circle actually sits on a given spear's shaft is a placement
    question (see fits_spear), not a validity one.
    """

    R: float
    const: float = 0.0
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("R must be positive")
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(c) for c in self.sin))

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.full_like(theta, self.const)
        for k, c in enumerate(self.cos):
            out = out + c * np.cos((k + 1) * theta)
        for k, c in enumerate(self.sin):
            out = out + c * np.sin((k + 1) * theta)
        return out if out.ndim else float(out)

    def derivative(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for k, c in enumerate(self.cos):
            out = out - c * (k + 1) * np.sin((k + 1) * theta)
        for k, c in enumerate(self.sin):
            out = out + c * (k + 1) * np.cos((k + 1) * theta)
        return out if out.ndim else float(out)

    def min_value(self, n: int = 4096) -> float:
        grid = np.linspace(0.0, TWO_PI, n, endpoint=False)
        lip = sum(
            (k + 1) * abs(c) for k, c in enumerate(self.cos)
        ) + sum((k + 1) * abs(c) for k, c in enumerate(self.sin))
        return float(self.value(grid).min()) - lip * (TWO_PI / n) / 2.0

    def max_abs_derivative(self, n: int = 4096) -> float:
        """Upper bound on sup |d tau^R / d theta| via dense grid plus Lipschitz slack."""
        grid = np.linspace(0.0, TWO_PI, n, endpoint=False)
        lip2 = sum(
            (k + 1) ** 2 * abs(c) for k, c in enumerate(self.cos)
        ) + sum((k + 1) ** 2 * abs(c) for k, c in enumerate(self.sin))
        return float(np.abs(self.derivative(grid)).max()) + lip2 * (TWO_PI / n) / 2.0

    def to_json(self) -> dict:
        return {
            "R": self.R,
            "const": self.const,
            "cos": list(self.cos),
            "sin": list(self.sin),
        }

    @classmethod
    def from_json(cls, d) -> "BoundaryProfile":
        return cls(
            R=float(d["R"]),
            const=float(d.get("const", 0.0)),
            cos=tuple(d.get("cos", ())),
            sin=tuple(d.get("sin", ())),
        )


@dataclass(frozen=True)
class SurfaceGraph:
    """Graph surface tau = tau_Sigma(r, theta) over the (punctured) disk r <= R."""

    profile: BoundaryProfile
    mode: str  # "complete" or "compact"
    M: float
    seam_tol: float = 1e-12

    def __post_init__(self):
        if self.mode not in ("complete", "compact"):
            raise ValueError("mode must be 'complete' or 'compact'")

    @property
    def R(self) -> float:
        return self.profile.R

    @property
    def punctured(self) -> bool:
        return self.mode == "complete"

    def _check_domain(self, r) -> None:
        r = np.asarray(r, dtype=float)
        if np.any(r > self.R * (1 + 1e-12)):
            raise ValueError("radial coordinate outside the disk")
        if self.punctured and np.any(r <= 0):
            raise ValueError("complete cap is defined on the punctured disk only")
        if np.any(r < 0):
            raise ValueError("radial coordinate must be nonnegative")

    def value(self, r, theta):
        self._check_domain(r)
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if self.mode == "complete":
            out = self.profile.value(theta) + self.M * (1.0 / r - 1.0 / self.R)
        else:
            # Core constant written as the outer formula at r = R/2 so the
            # seam is continuous bit-for-bit, not just within rounding.
            core = self.M * (2.0 / self.R - 1.0 / self.R)
            out = np.where(
                r >= self.R / 2,
                ((2 * r - self.R) / self.R) ** 2 * self.profile.value(theta)
                + self.M * (1.0 / np.maximum(r, self.R / 4) - 1.0 / self.R),
                core,
            )
        return out if out.ndim else float(out)

    def _on_seam(self, r) -> np.ndarray:
        if self.mode != "compact":
            return np.zeros(np.shape(np.asarray(r)), dtype=bool)
        r = np.asarray(r, dtype=float)
        return np.abs(r - self.R / 2) <= self.seam_tol * self.R

    def partials(self, r, theta) -> tuple[np.ndarray, np.ndarray]:
        """(d tau / d r, d tau / d theta); raises OnSeam on the compact crease."""
        self._check_domain(r)
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if np.any(self._on_seam(r)):
            raise OnSeam(f"derivative undefined on the seam r = {self.R / 2!r}")
        if self.mode == "complete":
            dr = np.broadcast_to(-self.M / r**2, np.broadcast_shapes(r.shape, theta.shape)).copy()
            dth = np.broadcast_to(self.profile.derivative(theta), dr.shape).copy()
        else:
            outer = r > self.R / 2
            s = (2 * r - self.R) / self.R
            dr = np.where(outer, (4 * s / self.R) * self.profile.value(theta)
                          - self.M / np.maximum(r, self.R / 4) ** 2, 0.0)
            dth = np.where(outer, s**2 * self.profile.derivative(theta), 0.0)
        if dr.ndim:
            return dr, dth
        return float(dr), float(dth)

    def to_json(self) -> dict:
        return {"profile": self.profile.to_json(), "mode": self.mode, "M": self.M}

    @classmethod
    def from_json(cls, d) -> "SurfaceGraph":
        return cls(BoundaryProfile.from_json(d["profile"]), d["mode"], float(d["M"]))


def delta(sg: SurfaceGraph, r, theta):
    """Spacelike margin 1 - 2 dtau/dr - ((1/r) dtau/dtheta)^2; positive = spacelike."""
    dr, dth = sg.partials(r, theta)
    r = np.asarray(r, dtype=float)
    return 1.0 - 2.0 * np.asarray(dr) - (np.asarray(dth) / r) ** 2


def induced_metric(sg: SurfaceGraph, r, theta) -> np.ndarray:
    """First fundamental form in (r, theta) coordinates, shape (..., 2, 2).

    Equals delta dr^2 + ((1/r) tau_theta dr - r dtheta)^2, so the determinant
    is exactly delta r^2.
    """
    dr, dth = sg.partials(r, theta)
    r = np.asarray(r, dtype=float)
    dval = delta(sg, r, theta)
    g_rr = dval + (np.asarray(dth) / r) ** 2
    g_rt = -np.asarray(dth) * np.ones_like(g_rr)
    g_tt = r**2 * np.ones_like(g_rr)
    return np.stack(
        [np.stack([g_rr, g_rt], axis=-1), np.stack([g_rt, g_tt], axis=-1)], axis=-2
    )


def extend_complete(profile: BoundaryProfile) -> SurfaceGraph:
    """Complete spacelike cap over the punctured disk with the given boundary.

    M = 1 + sup |d tau^R / d theta|^2 gives delta = 1 + (2M - (tau^R')^2)/r^2,
    which is > 1/r^2 everywhere, hence spacelike and metrically complete.
    """
    m = 1.0 + profile.max_abs_derivative() ** 2
    return SurfaceGraph(profile=profile, mode="complete", M=m)


def extend_compact(
    profile: BoundaryProfile,
    margin: float = 1e-6,
    samples: int = 200,
    max_doublings: int = 40,
) -> SurfaceGraph:
    """Compact spacelike cap: quadratically damped boundary term plus constant core.

    The slope constant M starts at 1 + sup |tau^R'|^2 and doubles until the
    sampled spacelike margin delta clears ``margin`` on the outer annulus
    (the inner constant piece has delta = 1 identically).
    """
    m = 1.0 + profile.max_abs_derivative() ** 2
    radii = profile.R / 2 + (profile.R / 2) * (np.arange(1, samples + 1) / samples)
    radii[-1] = profile.R
    thetas = TWO_PI * (np.arange(samples) + 0.5) / samples
    rr, tt = np.meshgrid(radii, thetas, indexing="ij")
    for _ in range(max_doublings + 1):
        sg = SurfaceGraph(profile=profile, mode="compact", M=m)
        dval = delta(sg, rr.ravel(), tt.ravel())
        if float(np.min(dval)) > margin:
            return sg
        m *= 2.0
    raise MSearchExhausted(
        f"no M made the compact cap spacelike after {max_doublings} doublings"
    )


@dataclass(frozen=True)
class CompletenessCertificate:
    conclusive: bool
    constant: float | None
    reason: str

    def to_json(self) -> dict:
        return {
            "conclusive": self.conclusive,
            "constant": self.constant,
            "reason": self.reason,
        }


def completeness_certificate(sg: SurfaceGraph, samples: int = 200) -> CompletenessCertificate:
    """Certify delta >= C^2 / r^2 with C > 0, which forces metric completeness.

    Any divergent path to the puncture then has length >= integral C/r dr,
    which diverges.  Conclusive only for complete-mode graphs; the compact cap
    reaches the axis at finite distance.
    """
    if sg.mode != "complete":
        return CompletenessCertificate(
            False, None, "compact cap reaches the axis at finite distance"
        )
    # r^2 delta = r^2 + 2M - (tau^R')^2; minimize the angular part analytically.
    sup_d = sg.profile.max_abs_derivative()
    floor = 2.0 * sg.M - sup_d**2
    if floor <= 0:
        return CompletenessCertificate(False, None, "slope constant too small")
    c = math.sqrt(floor)
    return CompletenessCertificate(True, c, "delta >= C^2 / r^2 on the punctured disk")


def divergence_check(sg: SurfaceGraph, probe_r: float = 1e-9) -> bool:
    """True when tau_Sigma tends to +infinity at the puncture (uniformly in theta)."""
    if sg.mode != "complete":
        return False
    thetas = TWO_PI * (np.arange(64) + 0.5) / 64
    near = float(np.min(sg.value(np.full_like(thetas, probe_r), thetas)))
    far = float(np.max(sg.value(np.full_like(thetas, sg.R), thetas)))
    return sg.M > 0 and near > far


def fits_spear(sg: SurfaceGraph, spear) -> dict:
    """Placement report of a cap against a spear descriptor (duck-typed:
    needs ``radius`` and ``ring_tau``).  The cap sits inside the spear when
    its disk is no wider than the spear and its boundary circle is on the
    shaft at or above the base ring.
    """
    radius_ok = sg.R <= spear.radius * (1 + 1e-12)
    boundary_ok = sg.profile.min_value() >= spear.ring_tau - 1e-12
    return {
        "radius_ok": bool(radius_ok),
        "boundary_on_shaft": bool(boundary_ok),
        "inside": bool(radius_ok and boundary_ok),
    }


@dataclass(frozen=True)
class ModelCurve:
    """Future causal polyline in normalized model coordinates (tau, r, theta).

    theta is unreduced (the curve may wind).  ``extends_to_infinity`` marks a
    curve whose final vertex continues as a vertical ray tau -> +infinity at
    fixed (r, theta); such curves are inextendible inside the spear without
    reaching the shaft wall.
    """

    points: np.ndarray
    extends_to_infinity: bool = False

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise ValueError("a curve needs at least two (tau, r, theta) vertices")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def validate_causal(self, band: float = 1e-9) -> None:
        """Segments must be future causal for -2 dtau dr + dr^2 + r^2 dtheta^2."""
        p = self.points
        d = np.diff(p, axis=0)
        r_max = np.maximum(p[:-1, 1], p[1:, 1])
        q = -2.0 * d[:, 0] * d[:, 1] + d[:, 1] ** 2 + r_max**2 * d[:, 2] ** 2
        scale = np.maximum(1.0, np.sum(d * d, axis=1))
        bad = np.where((q > band * scale) | (d[:, 0] <= 0))[0]
        if len(bad):
            i = int(bad[0])
            raise NotCausal(
                f"segment {i} is not future causal: interval {q[i]!r}, dtau {d[i, 0]!r}"
            )

    def to_json(self) -> dict:
        return {
            "points": [[float(c) for c in row] for row in self.points],
            "extends_to_infinity": self.extends_to_infinity,
        }

    @classmethod
    def from_json(cls, d) -> "ModelCurve":
        return cls(np.array(d["points"], dtype=float), bool(d.get("extends_to_infinity", False)))


@dataclass(frozen=True)
class IntersectionReport:
    count: int
    prediction: int
    exit_kind: str  # "shaft" or "infinity"
    min_gap: float

    @property
    def agree(self) -> bool:
        return self.count == self.prediction

    def to_json(self) -> dict:
        return {
            "count": self.count,
            "prediction": self.prediction,
            "exit_kind": self.exit_kind,
            "min_gap": self.min_gap,
            "agree": self.agree,
        }


def intersection_count(
    sg: SurfaceGraph,
    curve: ModelCurve,
    refine: int = 32,
    tangency_tol: float = 1e-8,
    band: float = 1e-9,
) -> IntersectionReport:
    """Count transversal crossings of the cap and compare with the causal prediction.

    The prediction is 1 exactly when the future end of the curve is in the
    causal future of the boundary circle: for a shaft exit that means leaving
    at or above the boundary profile at the exit angle (radial distance never
    decreases along future causal curves, so the circle's future meets the
    cylinder only vertically); for a curve running to tau = +infinity it is
    always 1, provided the cap diverges at the puncture in complete mode.
    """
    if sg.mode == "complete" and not divergence_check(sg):
        raise GeometryError("complete cap does not diverge; count is undefined")
    curve.validate_causal(band=band)
    pts = curve.points
    if np.any(pts[:, 1] > sg.R * (1 + 1e-9)):
        raise ValueError("curve leaves the disk r <= R")
    if sg.punctured and np.any(pts[:, 1] <= 0):
        raise ValueError("curve hits the puncture of a complete cap")

    # Refined gap samples f = tau_curve - tau_Sigma along every segment.
    fs = []
    for i in range(len(pts) - 1):
        s = np.linspace(0.0, 1.0, refine + 1)
        if i > 0:
            s = s[1:]
        seg = pts[i][None, :] + s[:, None] * (pts[i + 1] - pts[i])[None, :]
        fs.append(seg[:, 0] - sg.value(seg[:, 1], np.mod(seg[:, 2], TWO_PI)))
    f = np.concatenate(fs)
    min_gap = float(np.abs(f).min())
    if min_gap <= tangency_tol:
        raise Tangency(f"curve grazes the cap: smallest gap {min_gap!r}")
    count = int(np.sum(f[:-1] * f[1:] < 0))

    end = pts[-1]
    if curve.extends_to_infinity:
        exit_kind = "infinity"
        if f[-1] < 0:
            count += 1  # the implied vertical tail crosses the graph once
        prediction = 1
    elif abs(end[1] - sg.R) <= 1e-9 * sg.R:
        exit_kind = "shaft"
        boundary = float(sg.profile.value(np.mod(end[2], TWO_PI)))
        if abs(end[0] - boundary) <= tangency_tol:
            raise Tangency("curve exits the shaft exactly on the boundary circle")
        prediction = 1 if end[0] > boundary else 0
    else:
        raise GeometryError(
            "curve is not inextendible: it ends strictly inside the spear"
        )
    return IntersectionReport(
        count=count, prediction=prediction, exit_kind=exit_kind, min_gap=min_gap
    )
