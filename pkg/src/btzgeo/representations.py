"""Surface group presentations and their affine Lorentzian representations.

A punctured-surface group has generators a1, b1, ..., ag, bg, c1, ..., cs and
the single relator [a1,b1]...[ag,bg] c1...cs.  A representation assigns each
generator a linear isometry of the Minkowski plane and a translation part; the
translation parts form a cocycle: tau(gh) = tau(g) + rho(g) tau(h).

Admissibility, the gate for the spacetime builder, requires: relator residual
at float precision; every peripheral image parabolic; every peripheral
translation part tangent (Minkowski-orthogonal to the fixed lightlike
direction of its linear part).  Discreteness has no desk-scale algorithm and
is only certified for the builtin examples, which come from classical
arithmetic groups.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .minkowski import (
    AffineIsometry,
    GeometryError,
    IsometryKind,
    LinearIsometry,
    classify_isometry,
    fixed_lightlike_direction,
    fixed_line,
    is_tangent,
    minkowski_inner,
)

RELATOR_TOL = 1e-9


class UnknownGenerator(GeometryError):
    """Word uses a generator the representation does not define."""


class NotUnimodular(GeometryError):
    """2x2 matrix is not in SL(2, R)."""


class NotAdmissible(GeometryError):
    """Representation failed the admissibility gate."""

    def __init__(self, report: "AdmissibilityReport"):
        super().__init__(f"representation not admissible: {report.summary()}")
        self.report = report


# sl2(R) basis orthonormal for the form Q(X) = -det(X) of signature (-,+,+):
# E0 timelike (rotation generator), E1 and E2 spacelike.
SL2_BASIS = (
    np.array([[0.0, -1.0], [1.0, 0.0]]),
    np.array([[1.0, 0.0], [0.0, -1.0]]),
    np.array([[0.0, 1.0], [1.0, 0.0]]),
)


def _sl2_coords(x: np.ndarray) -> np.ndarray:
    """Coordinates of a traceless 2x2 matrix in the SL2_BASIS frame."""
    a, b, c = x[0, 0], x[0, 1], x[1, 0]
    return np.array([0.5 * (c - b), a, 0.5 * (b + c)])


def sl2_to_so12(m) -> LinearIsometry:
    """Adjoint action of SL(2,R) on sl2, expressed in the fixed orthonormal basis.

    The basis (E0, E1, E2) above is pinned for bit-reproducibility; the kernel
    is {+-I} and the image is the orthochronous group.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise NotUnimodular(f"expected 2x2 matrix, got {m.shape}")
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det - 1.0) > 1e-9 * max(1.0, float(np.abs(m).max()) ** 2):
        raise NotUnimodular(f"det = {det!r}")
    minv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det
    cols = [_sl2_coords(m @ e @ minv) for e in SL2_BASIS]
    return LinearIsometry(np.column_stack(cols))


def boundary_to_lightlike(xi: float) -> np.ndarray:
    """Boundary point of the upper half-plane -> future lightlike vector, t = 1.

    xi = infinity maps to (1, 0, -1); finite xi to (1, 2xi, 1-xi^2)/(1+xi^2)
    componentwise on the spatial slots.  Equivariant for the Moebius action
    through sl2_to_so12 up to positive scale.
    """
    if math.isinf(xi):
        return np.array([1.0, 0.0, -1.0])
    d = 1.0 + xi * xi
    return np.array([1.0, 2.0 * xi / d, (1.0 - xi * xi) / d])


def lightlike_to_boundary(u) -> float:
    """Inverse of boundary_to_lightlike on t-normalized future lightlike vectors."""
    u = np.asarray(u, dtype=float)
    v = u / u[0]
    if abs(1.0 + v[2]) < 1e-12:
        return math.inf
    return float(v[1] / (1.0 + v[2]))


@dataclass(frozen=True)
class SurfaceGroupPresentation:
    """Genus g, s punctures, negative Euler characteristic 2 - 2g - s < 0."""

    genus: int
    punctures: int

    def __post_init__(self):
        if self.genus < 0 or self.punctures < 1:
            raise ValueError("need genus >= 0 and at least one puncture")
        if 2 - 2 * self.genus - self.punctures >= 0:
            raise ValueError("Euler characteristic must be negative")

    @property
    def generator_names(self) -> list[str]:
        names = []
        for i in range(1, self.genus + 1):
            names += [f"a{i}", f"b{i}"]
        names += [f"c{j}" for j in range(1, self.punctures + 1)]
        return names

    @property
    def peripheral_names(self) -> list[str]:
        return [f"c{j}" for j in range(1, self.punctures + 1)]

    @property
    def free_generator_names(self) -> list[str]:
        """All generators except the last peripheral, which the relator forces."""
        return self.generator_names[:-1]

    @property
    def relator(self) -> str:
        parts = []
        for i in range(1, self.genus + 1):
            parts += [f"a{i}", f"b{i}", f"a{i}^-1", f"b{i}^-1"]
        parts += self.peripheral_names
        return " ".join(parts)

    def to_json(self) -> dict:
        return {"genus": self.genus, "punctures": self.punctures}


def parse_word(word: str) -> list[tuple[str, int]]:
    """Split a whitespace-separated word into (generator, +-1) letters."""
    letters = []
    for tok in word.split():
        if tok.endswith("^-1"):
            letters.append((tok[:-3], -1))
        else:
            letters.append((tok, 1))
    return letters


def invert_word(word: str) -> str:
    return " ".join(
        (name if e == -1 else f"{name}^-1") for name, e in reversed(parse_word(word))
    )


@dataclass
class AffineRepresentation:
    """Generator images: linear parts (validated isometries) and translation parts."""

    presentation: SurfaceGroupPresentation
    linear: dict[str, LinearIsometry]
    translations: dict[str, np.ndarray] = field(default_factory=dict)
    sl2: dict[str, np.ndarray] | None = None
    discreteness_certified: bool = False

    def __post_init__(self):
        names = set(self.presentation.generator_names)
        if set(self.linear) != names:
            raise ValueError(f"linear parts must cover exactly {sorted(names)}")
        trs = {}
        for name in self.presentation.generator_names:
            v = np.array(self.translations.get(name, np.zeros(3)), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"bad translation for {name}")
            trs[name] = v
        self.translations = trs
        if self.sl2 is not None:
            for name, m in self.sl2.items():
                img = sl2_to_so12(m)
                if np.abs(img.matrix - self.linear[name].matrix).max() > 1e-8:
                    raise ValueError(f"sl2 lift of {name} disagrees with its so12 image")

    def generator(self, name: str) -> AffineIsometry:
        if name not in self.linear:
            raise UnknownGenerator(name)
        return AffineIsometry(self.linear[name], self.translations[name])

    def evaluate(self, word: str) -> AffineIsometry:
        """Left-to-right composition of generator images: rho(xy) = rho(x) rho(y)."""
        out = AffineIsometry.identity()
        for name, exp in parse_word(word):
            g = self.generator(name)
            out = out.compose(g if exp == 1 else g.inverse())
        return out

    def evaluate_linear(self, word: str) -> LinearIsometry:
        return self.evaluate(word).linear

    def with_translations(self, translations: dict[str, np.ndarray]) -> "AffineRepresentation":
        return AffineRepresentation(
            self.presentation,
            dict(self.linear),
            {k: np.array(v, dtype=float) for k, v in translations.items()},
            sl2=self.sl2,
            discreteness_certified=self.discreteness_certified,
        )

    def to_json(self) -> dict:
        gens = {}
        for name in self.presentation.generator_names:
            entry = {
                "so12": self.linear[name].to_json(),
                "translation": [float(x) for x in self.translations[name]],
            }
            if self.sl2 is not None and name in self.sl2:
                entry["sl2"] = [[float(x) for x in row] for row in self.sl2[name]]
            gens[name] = entry
        return {
            "genus": self.presentation.genus,
            "punctures": self.presentation.punctures,
            "generators": gens,
        }

    @classmethod
    def from_json(cls, d) -> "AffineRepresentation":
        pres = SurfaceGroupPresentation(int(d["genus"]), int(d["punctures"]))
        linear, trans, sl2 = {}, {}, {}
        gens = d["generators"]
        for name in pres.generator_names:
            if name not in gens:
                raise UnknownGenerator(f"missing generator {name}")
            entry = gens[name]
            if "sl2" in entry:
                sl2[name] = np.array(entry["sl2"], dtype=float)
                linear[name] = sl2_to_so12(sl2[name])
                if "so12" in entry:
                    given = LinearIsometry.from_json(entry["so12"])
                    if np.abs(given.matrix - linear[name].matrix).max() > 1e-8:
                        raise ValueError(f"sl2 and so12 disagree for {name}")
            elif "so12" in entry:
                linear[name] = LinearIsometry.from_json(entry["so12"])
            else:
                raise ValueError(f"generator {name} needs an sl2 or so12 matrix")
            trans[name] = np.array(entry.get("translation", [0.0, 0.0, 0.0]), dtype=float)
        return cls(pres, linear, trans, sl2=sl2 or None)


def evaluate_word(rep: AffineRepresentation, word: str) -> AffineIsometry:
    return rep.evaluate(word)


class Discreteness(enum.Enum):
    CERTIFIED_BY_CONSTRUCTION = "certified_by_construction"
    NOT_CHECKED = "not_checked"


@dataclass(frozen=True)
class PeripheralCheck:
    name: str
    parabolic: bool
    tangent: bool
    fixed_direction: np.ndarray | None


@dataclass(frozen=True)
class AdmissibilityReport:
    relator_residual: float
    peripheral: tuple[PeripheralCheck, ...]
    discreteness: Discreteness
    verdict: bool

    def summary(self) -> str:
        bad = [p.name for p in self.peripheral if not (p.parabolic and p.tangent)]
        return (
            f"relator residual {self.relator_residual:.3e}; "
            f"non-admissible peripherals {bad or 'none'}; "
            f"discreteness {self.discreteness.value}"
        )

    def to_json(self) -> dict:
        return {
            "relator_residual": self.relator_residual,
            "peripheral": {
                p.name: {
                    "parabolic": p.parabolic,
                    "tangent": p.tangent,
                    "fixed_direction": None
                    if p.fixed_direction is None
                    else [float(x) for x in p.fixed_direction],
                }
                for p in self.peripheral
            },
            "discreteness": self.discreteness.value,
            "verdict": self.verdict,
        }


def check_admissible(rep: AffineRepresentation, tol: float = RELATOR_TOL) -> AdmissibilityReport:
    """Relator residual, peripheral parabolicity and tangency, discreteness status."""
    rel = rep.evaluate(rep.presentation.relator)
    residual = float(
        np.abs(rel.linear.matrix - np.eye(3)).max()
        + np.abs(rel.translation).max()
    )
    checks = []
    for name in rep.presentation.peripheral_names:
        g = rep.generator(name)
        parab = classify_isometry(g.linear).kind is IsometryKind.PARABOLIC
        if parab:
            u = fixed_lightlike_direction(g.linear)
            tang = is_tangent(g)
        else:
            u, tang = None, False
        checks.append(PeripheralCheck(name, parab, tang, u))
    verdict = residual <= tol and all(p.parabolic and p.tangent for p in checks)
    disc = (
        Discreteness.CERTIFIED_BY_CONSTRUCTION
        if rep.discreteness_certified
        else Discreteness.NOT_CHECKED
    )
    return AdmissibilityReport(residual, tuple(checks), disc, verdict)


@dataclass(frozen=True)
class PeripheralFixedData:
    """Per-puncture decoration data: fixed lightlike direction and anchor on the fixed line."""

    name: str
    u: np.ndarray           # future lightlike, t component 1
    line_point: np.ndarray  # minimum-norm point of the fixed line
    line_direction: np.ndarray

    @property
    def boundary_position(self) -> float:
        return lightlike_to_boundary(self.u)


def peripheral_fixed_data(rep: AffineRepresentation) -> dict[str, PeripheralFixedData]:
    """Fixed direction u_j and minimum-norm fixed point p_j for each peripheral."""
    out = {}
    for name in rep.presentation.peripheral_names:
        g = rep.generator(name)
        u = fixed_lightlike_direction(g.linear)
        point, direction = fixed_line(g)
        out[name] = PeripheralFixedData(name, u, point, direction)
    return out


def cocycle_from_tangent_vector(
    rep: AffineRepresentation, assignment: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    """Extend translation parts given on the free generators to all generators.

    The last peripheral is forced by the relator: with relator w c_s = 1,
    tau(c_s) = translation of (rho(w))^{-1} evaluated with the partial cocycle.
    """
    pres = rep.presentation
    free = pres.free_generator_names
    unknown = set(assignment) - set(free)
    if unknown:
        raise UnknownGenerator(f"assignment on non-free generators {sorted(unknown)}")
    partial = {name: np.array(assignment.get(name, np.zeros(3)), dtype=float) for name in free}
    last = pres.peripheral_names[-1]
    partial[last] = np.zeros(3)
    tmp = rep.with_translations(partial)
    prefix_tokens = pres.relator.split()
    # Relator is "<prefix> c_s"; drop the final letter.
    prefix = " ".join(prefix_tokens[:-1])
    forced = tmp.evaluate(prefix).inverse()
    partial[last] = forced.translation
    return partial


def tangent_cocycle_basis(rep: AffineRepresentation) -> list[dict[str, np.ndarray]]:
    """Basis of translation cocycles tangent at every peripheral.

    Variables are the translations of the free generators; constraints are one
    linear tangency condition per peripheral (the forced last peripheral
    depends linearly on the variables).  The kernel is extracted by SVD with a
    deterministic sign convention.
    """
    pres = rep.presentation
    free = pres.free_generator_names
    fixed = peripheral_fixed_data(rep)
    dim = 3 * len(free)

    def tangency_values(vec: np.ndarray) -> np.ndarray:
        assignment = {
            name: vec[3 * i: 3 * i + 3] for i, name in enumerate(free)
        }
        full = cocycle_from_tangent_vector(rep, assignment)
        return np.array(
            [minkowski_inner(full[name], fixed[name].u) for name in pres.peripheral_names]
        )

    rows = np.column_stack([tangency_values(e) for e in np.eye(dim)])
    _, svals, vt = np.linalg.svd(rows)
    tol = 1e-9 * max(1.0, float(svals[0]) if len(svals) else 1.0)
    rank = int(np.sum(svals > tol))
    basis = []
    for v in vt[rank:]:
        lead = v[np.argmax(np.abs(v) > 1e-12)]
        if lead < 0:
            v = -v
        basis.append({name: v[3 * i: 3 * i + 3].copy() for i, name in enumerate(free)})
    return basis


@dataclass(frozen=True)
class Gluing:
    """Edge pairing: left edge (triangle index, ordered vertex pair), right likewise.

    Convention: position(left vertex k) = word . position(right vertex k) under
    the Moebius action of the word's linear part, for k = 0, 1; in the
    universal cover the left fundamental simplex is adjacent to the right
    simplex translated by the word.
    """

    left: tuple[int, tuple[str, str]]
    right: tuple[int, tuple[str, str]]
    word: str

    def to_json(self) -> dict:
        return {
            "left": [self.left[0], list(self.left[1])],
            "right": [self.right[0], list(self.right[1])],
            "word": self.word,
        }

    @classmethod
    def from_json(cls, d) -> "Gluing":
        return cls(
            (int(d["left"][0]), tuple(d["left"][1])),
            (int(d["right"][0]), tuple(d["right"][1])),
            str(d["word"]),
        )


class InvalidTriangulation(GeometryError):
    """Combinatorial or positional defect in an ideal triangulation."""


@dataclass
class IdealTriangulationData:
    """Ideal triangulation of the quotient surface, one fundamental copy per triangle.

    ``positions`` places each vertex on the boundary of the upper half-plane
    (math.inf allowed); ``vertex_class`` sends each vertex to the peripheral
    generator of its puncture.  Every undirected triangle edge is glued
    exactly once.
    """

    triangles: list[tuple[str, str, str]]
    gluings: list[Gluing]
    vertex_class: dict[str, str]
    positions: dict[str, float]

    def __post_init__(self):
        self.triangles = [tuple(t) for t in self.triangles]
        verts = {v for t in self.triangles for v in t}
        if set(self.vertex_class) != verts or set(self.positions) != verts:
            raise InvalidTriangulation("vertex_class/positions must cover the triangle vertices")
        slots: dict[tuple[int, frozenset], int] = {}
        for g in self.gluings:
            for tri, pair in (g.left, g.right):
                if tri >= len(self.triangles):
                    raise InvalidTriangulation(f"gluing references triangle {tri}")
                if not set(pair) <= set(self.triangles[tri]):
                    raise InvalidTriangulation(f"edge {pair} not in triangle {tri}")
                key = (tri, frozenset(pair))
                slots[key] = slots.get(key, 0) + 1
        expected = {
            (i, frozenset((t[k], t[(k + 1) % 3])))
            for i, t in enumerate(self.triangles)
            for k in range(3)
        }
        if set(slots) != expected or any(v != 1 for v in slots.values()):
            raise InvalidTriangulation("every edge must be glued exactly once")

    def edges_of(self, tri: int) -> list[frozenset]:
        t = self.triangles[tri]
        return [frozenset((t[k], t[(k + 1) % 3])) for k in range(3)]

    def gluing_at(self, tri: int, edge: frozenset) -> tuple[Gluing, bool]:
        """Gluing containing (tri, edge); second item is True when it sits on the left."""
        for g in self.gluings:
            if g.left[0] == tri and frozenset(g.left[1]) == edge:
                return g, True
            if g.right[0] == tri and frozenset(g.right[1]) == edge:
                return g, False
        raise InvalidTriangulation(f"edge {set(edge)} of triangle {tri} is unglued")

    def to_json(self) -> dict:
        return {
            "triangles": [list(t) for t in self.triangles],
            "gluings": [g.to_json() for g in self.gluings],
            "vertex_class": dict(self.vertex_class),
            "positions": {
                k: ("inf" if math.isinf(v) else float(v)) for k, v in self.positions.items()
            },
        }

    @classmethod
    def from_json(cls, d) -> "IdealTriangulationData":
        return cls(
            [tuple(t) for t in d["triangles"]],
            [Gluing.from_json(g) for g in d["gluings"]],
            {str(k): str(v) for k, v in d["vertex_class"].items()},
            {
                str(k): (math.inf if v == "inf" else float(v))
                for k, v in d["positions"].items()
            },
        )


@dataclass(frozen=True)
class BuiltinExample:
    """A certified admissible representation with triangulation and a tangent deformation."""

    name: str
    representation: AffineRepresentation
    triangulation: IdealTriangulationData
    nonzero_tangent: dict[str, np.ndarray]

    def deformed(self, scale: float = 1.0) -> AffineRepresentation:
        """Representation with the nonzero tangent cocycle installed (scaled)."""
        assignment = {k: scale * v for k, v in self.nonzero_tangent.items()}
        full = cocycle_from_tangent_vector(self.representation, assignment)
        return self.representation.with_translations(full)


def _gamma2_example() -> BuiltinExample:
    pres = SurfaceGroupPresentation(genus=0, punctures=3)
    c1 = np.array([[1.0, 2.0], [0.0, 1.0]])   # fixes infinity
    c2 = np.array([[1.0, 0.0], [-2.0, 1.0]])  # fixes 0
    c3 = np.linalg.inv(c1 @ c2)               # fixes 1, trace -2
    sl2 = {"c1": c1, "c2": c2, "c3": c3}
    rep = AffineRepresentation(
        pres,
        {k: sl2_to_so12(v) for k, v in sl2.items()},
        sl2=sl2,
        discreteness_certified=True,
    )
    tri = IdealTriangulationData(
        triangles=[("0", "-1", "inf"), ("1", "0", "inf")],
        gluings=[
            Gluing((0, ("0", "inf")), (1, ("0", "inf")), ""),
            Gluing((0, ("-1", "inf")), (1, ("1", "inf")), "c1^-1"),
            Gluing((1, ("1", "0")), (0, ("-1", "0")), "c2^-1"),
        ],
        vertex_class={"inf": "c1", "0": "c2", "1": "c3", "-1": "c3"},
        positions={"inf": math.inf, "0": 0.0, "1": 1.0, "-1": -1.0},
    )
    basis = tangent_cocycle_basis(rep)
    nonzero = {k: 0.25 * v for k, v in basis[0].items()}
    return BuiltinExample("gamma2", rep, tri, nonzero)


def _punctured_torus_example() -> BuiltinExample:
    pres = SurfaceGroupPresentation(genus=1, punctures=1)
    a = np.array([[1.0, 1.0], [1.0, 2.0]])
    b = np.array([[1.0, -1.0], [-1.0, 2.0]])
    comm = a @ b @ np.linalg.inv(a) @ np.linalg.inv(b)
    c1 = np.linalg.inv(comm)  # parabolic fixing 0, trace -2
    sl2 = {"a1": a, "b1": b, "c1": c1}
    rep = AffineRepresentation(
        pres,
        {k: sl2_to_so12(v) for k, v in sl2.items()},
        sl2=sl2,
        discreteness_certified=True,
    )
    tri = IdealTriangulationData(
        triangles=[("0", "-1", "inf"), ("1", "0", "inf")],
        gluings=[
            Gluing((0, ("0", "inf")), (1, ("0", "inf")), ""),
            Gluing((0, ("-1", "inf")), (1, ("0", "1")), "a1^-1"),
            Gluing((1, ("1", "inf")), (0, ("0", "-1")), "b1^-1"),
        ],
        vertex_class={"inf": "c1", "0": "c1", "1": "c1", "-1": "c1"},
        positions={"inf": math.inf, "0": 0.0, "1": 1.0, "-1": -1.0},
    )
    basis = tangent_cocycle_basis(rep)
    nonzero = {k: 0.25 * v for k, v in basis[0].items()}
    return BuiltinExample("punctured_torus", rep, tri, nonzero)


def builtin_examples() -> dict[str, BuiltinExample]:
    """The two shipped demos: the thrice-punctured sphere and the once-punctured torus."""
    g2 = _gamma2_example()
    t1 = _punctured_torus_example()
    return {g2.name: g2, t1.name: t1}
