"""Exact minimal-model schedules for projective surfaces.

Classes live in a lattice with an integer intersection form.  The cone of
curves is supplied as a finite bank of irreducible curve classes, and every
answer here is certified only relative to that bank: with an incomplete bank
the computed nef threshold is an upper bound for the true one.

No floating point is used anywhere in this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .errors import (
    DimensionError,
    InconsistentBankError,
    InvariantViolationError,
    LatticeDiagnosticError,
    MisuseError,
    NotAmpleError,
    UnsupportedPresentationError,
)

INFINITY = math.inf

MINIMAL_MODEL = "MinimalModel"
COLLAPSE_FANO = "CollapseFano"
COLLAPSE_RULED = "CollapseRuled"


def _rational(x) -> Fraction:
    if isinstance(x, float):
        raise TypeError("floating-point coefficients are not accepted; pass ints, Fractions or 'p/q' strings")
    return Fraction(x)


@dataclass(frozen=True)
class DivisorClass:
    coeffs: tuple[Fraction, ...]

    def __init__(self, coeffs):
        object.__setattr__(self, "coeffs", tuple(_rational(c) for c in coeffs))

    def __len__(self):
        return len(self.coeffs)

    def __add__(self, other: DivisorClass) -> DivisorClass:
        if len(other) != len(self):
            raise DimensionError("class lengths differ")
        return DivisorClass(x + y for x, y in zip(self.coeffs, other.coeffs))

    def __sub__(self, other: DivisorClass) -> DivisorClass:
        return self + other.scale(-1)

    def scale(self, c) -> DivisorClass:
        c = _rational(c)
        return DivisorClass(c * x for x in self.coeffs)

    def is_zero(self) -> bool:
        return all(x == 0 for x in self.coeffs)

    def denominator_lcm(self) -> int:
        return math.lcm(*(x.denominator for x in self.coeffs)) if self.coeffs else 1

    def to_strings(self) -> list[str]:
        return [str(x) for x in self.coeffs]

    def __repr__(self):
        return f"DivisorClass({self.to_strings()})"


@dataclass(frozen=True)
class CurveClass:
    cls: DivisorClass
    label: str


@dataclass(frozen=True)
class SurfaceLattice:
    basis_labels: tuple[str, ...]
    intersection_matrix: tuple[tuple[int, ...], ...]
    canonical: DivisorClass
    curve_bank: tuple[CurveClass, ...]

    def __post_init__(self):
        r = len(self.basis_labels)
        Q = self.intersection_matrix
        if len(Q) != r or any(len(row) != r for row in Q):
            raise DimensionError("intersection matrix must be rank x rank")
        for i in range(r):
            for j in range(r):
                if not isinstance(Q[i][j], int):
                    raise TypeError("intersection matrix entries must be integers")
                if Q[i][j] != Q[j][i]:
                    raise ValueError("intersection matrix must be symmetric")
        if len(self.canonical) != r:
            raise DimensionError("canonical class has wrong length")
        for c in self.curve_bank:
            if len(c.cls) != r:
                raise DimensionError(f"curve {c.label} has wrong length")

    @property
    def rank(self) -> int:
        return len(self.basis_labels)

    @property
    def is_standard_form(self) -> bool:
        """True for the blow-up presentation H, E_1, ..., E_k with diag(1, -1, ..., -1)."""
        Q = self.intersection_matrix
        r = self.rank
        if r == 0 or Q[0][0] != 1:
            return False
        for i in range(r):
            for j in range(r):
                expected = 0 if i != j else (1 if i == 0 else -1)
                if Q[i][j] != expected:
                    return False
        return True

    def with_bank(self, bank) -> SurfaceLattice:
        return SurfaceLattice(self.basis_labels, self.intersection_matrix, self.canonical, tuple(bank))


def intersect(a: DivisorClass, b: DivisorClass, lat: SurfaceLattice) -> Fraction:
    """Bilinear pairing a^T Q b."""
    r = lat.rank
    if len(a) != r or len(b) != r:
        raise DimensionError(f"expected classes of length {r}, got {len(a)} and {len(b)}")
    Q = lat.intersection_matrix
    total = Fraction(0)
    for i, ai in enumerate(a.coeffs):
        if ai == 0:
            continue
        row = Q[i]
        for j, bj in enumerate(b.coeffs):
            if bj and row[j]:
                total += ai * row[j] * bj
    return total


def self_intersection(a: DivisorClass, lat: SurfaceLattice) -> Fraction:
    return intersect(a, a, lat)


def is_numerically_trivial(a: DivisorClass, lat: SurfaceLattice) -> bool:
    r = lat.rank
    for k in range(r):
        e = DivisorClass([1 if i == k else 0 for i in range(r)])
        if intersect(a, e, lat) != 0:
            return False
    return True


def nef_threshold(L: DivisorClass, lat: SurfaceLattice):
    """sup{t : L + tK nef against the bank}; ``INFINITY`` if K is nef on the bank."""
    K = lat.canonical
    best = INFINITY
    for c in lat.curve_bank:
        lc = intersect(L, c.cls, lat)
        if lc <= 0:
            raise NotAmpleError(f"L.{c.label} = {lc} <= 0; L must be positive on every bank curve")
        kc = intersect(K, c.cls, lat)
        if kc < 0:
            t = lc / (-kc)
            if best is INFINITY or t < best:
                best = t
    return best


@dataclass(frozen=True)
class Contraction:
    """Outcome of contraction_data when M = r(L + TK) is big."""
    M: DivisorClass
    scale: int
    contracted: tuple[CurveClass, ...]


@dataclass(frozen=True)
class Collapse:
    """Outcome of contraction_data when M is not big (M.M = 0)."""
    M: DivisorClass
    scale: int
    verdict: str


def contraction_data(L: DivisorClass, T, lat: SurfaceLattice):
    if T is INFINITY:
        raise MisuseError("contraction data requires a finite threshold")
    T = _rational(T)
    K = lat.canonical
    raw = L + K.scale(T)
    r = raw.denominator_lcm()
    M = raw.scale(r)
    MM = self_intersection(M, lat)
    if MM < 0:
        raise LatticeDiagnosticError(
            f"(L + TK)^2 = {self_intersection(raw, lat)} < 0 at T = {T}: the volume boundary was crossed "
            "before a bank curve reached zero pairing; the bank is probably incomplete")
    if MM == 0:
        return Collapse(M, r, classify_terminal(M, lat))

    zero = [c for c in lat.curve_bank if intersect(M, c.cls, lat) == 0]
    for c in zero:
        c2 = self_intersection(c.cls, lat)
        kc = intersect(K, c.cls, lat)
        if c2 != -1:
            raise InconsistentBankError(
                f"curve {c.label} has M.C = 0 but C^2 = {c2}; the bank does not generate the Mori cone")
        if kc != -1:
            raise InconsistentBankError(f"curve {c.label} has M.C = 0, C^2 = -1 but K.C = {kc} (adjunction fails)")
    for i in range(len(zero)):
        for j in range(i + 1, len(zero)):
            if intersect(zero[i].cls, zero[j].cls, lat) != 0:
                raise InvariantViolationError(
                    f"contracted curves {zero[i].label} and {zero[j].label} meet although M^2 > 0")
    return Contraction(M, r, tuple(zero))


def _basis_index(c: CurveClass, lat: SurfaceLattice) -> int:
    nonzero = [i for i, x in enumerate(c.cls.coeffs) if x != 0]
    if len(nonzero) != 1 or c.cls.coeffs[nonzero[0]] != 1 or nonzero[0] == 0:
        raise UnsupportedPresentationError(
            f"curve {c.label} = {c.cls.to_strings()} is not a basis class E_i; "
            "only contractions of exceptional basis classes are supported")
    return nonzero[0]


@dataclass(frozen=True)
class Pushforward:
    kept: tuple[int, ...]

    def __call__(self, a: DivisorClass) -> DivisorClass:
        return DivisorClass(a.coeffs[i] for i in self.kept)


def blow_down(lat: SurfaceLattice, contracted: Sequence[CurveClass]):
    """Contract basis classes E_i; returns the smaller lattice and the pushforward."""
    if not lat.is_standard_form:
        raise UnsupportedPresentationError("blow-down needs a lattice in standard form H, E_1, ..., E_k")
    dropped = {_basis_index(c, lat) for c in contracted}
    kept = tuple(i for i in range(lat.rank) if i not in dropped)
    push = Pushforward(kept)
    Q = tuple(tuple(lat.intersection_matrix[i][j] for j in kept) for i in kept)
    bank = []
    seen = set()
    for c in lat.curve_bank:
        if _is_among(c, contracted):
            continue
        pc = push(c.cls)
        if pc.is_zero() or pc.coeffs in seen:
            continue
        seen.add(pc.coeffs)
        bank.append(CurveClass(pc, c.label))
    new = SurfaceLattice(tuple(lat.basis_labels[i] for i in kept), Q, push(lat.canonical), tuple(bank))
    return new, push


def _is_among(c: CurveClass, curves) -> bool:
    return any(c.cls == d.cls for d in curves)


def classify_terminal(M: DivisorClass, lat: SurfaceLattice) -> str:
    if self_intersection(M, lat) > 0:
        raise MisuseError("M is big; terminal classification applies only when M.M = 0")
    return COLLAPSE_FANO if is_numerically_trivial(M, lat) else COLLAPSE_RULED


@dataclass(frozen=True)
class SurgeryStep:
    threshold: Fraction
    absolute_time: Fraction
    big_class: DivisorClass
    scale: int
    contracted: tuple[CurveClass, ...]
    pushforward: Pushforward
    next_lattice: SurfaceLattice
    lattice: SurfaceLattice


@dataclass
class SurgerySchedule:
    steps: list[SurgeryStep]
    terminal: str
    terminal_time: object  # Fraction or INFINITY
    terminal_threshold: object = None
    terminal_class: DivisorClass | None = None
    terminal_scale: int | None = None
    final_lattice: SurfaceLattice | None = None
    initial_lattice: SurfaceLattice | None = None
    initial_class: DivisorClass | None = None

    def to_dict(self) -> dict:
        return schedule_to_dict(self)


def run_schedule(L0: DivisorClass, lat0: SurfaceLattice) -> SurgerySchedule:
    """Iterate threshold -> contraction -> blow-down until K is nef or the volume collapses."""
    L, lat = L0, lat0
    elapsed = Fraction(0)
    steps: list[SurgeryStep] = []
    while True:
        T = nef_threshold(L, lat)
        if T is INFINITY:
            return SurgerySchedule(steps, MINIMAL_MODEL, INFINITY, INFINITY, None, None, lat, lat0, L0)
        data = contraction_data(L, T, lat)
        if isinstance(data, Collapse):
            return SurgerySchedule(steps, data.verdict, elapsed + T, T, data.M, data.scale, lat, lat0, L0)
        if not data.contracted:
            raise InvariantViolationError("threshold reached with M big but no curve to contract")
        new_lat, push = blow_down(lat, data.contracted)
        if new_lat.rank >= lat.rank:
            raise InvariantViolationError("lattice rank did not drop")
        elapsed += T
        steps.append(SurgeryStep(T, elapsed, data.M, data.scale, data.contracted, push, new_lat, lat))
        L = push(L + lat.canonical.scale(T))
        lat = new_lat


# ----------------------------------------------------------------- presets

def _standard_lattice(k: int) -> SurfaceLattice:
    r = k + 1
    labels = ("H",) + tuple(f"E{i}" for i in range(1, k + 1))
    Q = tuple(tuple(0 if i != j else (1 if i == 0 else -1) for j in range(r)) for i in range(r))
    K = DivisorClass([-3] + [1] * k)
    return SurfaceLattice(labels, Q, K, ())


def blowup_p2(k: int) -> SurfaceLattice:
    """P^2 blown up at k <= 3 general points with a complete bank of extremal curves."""
    if not 0 <= k <= 3:
        raise ValueError("presets ship complete banks only for k <= 3")
    lat = _standard_lattice(k)
    r = k + 1
    if k == 0:
        return lat.with_bank([CurveClass(DivisorClass([1]), "line")])
    if k == 1:
        return lat.with_bank([
            CurveClass(DivisorClass([0, 1]), "E1"),
            CurveClass(DivisorClass([1, -1]), "H-E1"),
        ])
    bank = [CurveClass(DivisorClass([int(j == i) for j in range(r)]), f"E{i}") for i in range(1, k + 1)]
    for i in range(1, k + 1):
        for j in range(i + 1, k + 1):
            v = [0] * r
            v[0], v[i], v[j] = 1, -1, -1
            bank.append(CurveClass(DivisorClass(v), f"H-E{i}-E{j}"))
    return lat.with_bank(bank)


def p2() -> SurfaceLattice:
    return blowup_p2(0)


def p1xp1() -> SurfaceLattice:
    return SurfaceLattice(
        ("F1", "F2"), ((0, 1), (1, 0)), DivisorClass([-2, -2]),
        (CurveClass(DivisorClass([1, 0]), "F1"), CurveClass(DivisorClass([0, 1]), "F2")),
    )


PRESETS = {
    "P2": p2,
    "Bl1P2": lambda: blowup_p2(1),
    "Bl2P2": lambda: blowup_p2(2),
    "Bl3P2": lambda: blowup_p2(3),
    "P1xP1": p1xp1,
}


def example_class(a0, b0) -> DivisorClass:
    """The class b0*H - a0*E on the one-point blow-up of P^2."""
    return DivisorClass([_rational(b0), -_rational(a0)])


def blowup_pn_times(n: int, a0, b0) -> tuple[Fraction, Fraction]:
    """Exact (T, T_Y) for b0 H - a0 E on P^n blown up at a point.

    The extremal curves are a line l in E and the strict transform f of a line
    through the point: K.l = -(n-1), L.l = a0, K.f = -2, L.f = b0 - a0.  The
    divisor is contracted first iff a0(n+1) < b0(n-1); afterwards the class
    (b0 - (n+1)T) H on P^n collapses at T_Y = T + kappa/(n+1).
    """
    if n < 2:
        raise DimensionError("need n >= 2")
    a0, b0 = _rational(a0), _rational(b0)
    if not 0 < a0 < b0:
        raise NotAmpleError("need 0 < a0 < b0")
    T = a0 / (n - 1)
    if not T < (b0 - a0) / 2:
        raise MisuseError("a0(n+1) < b0(n-1) fails: the class collapses before E is contracted")
    kappa = b0 - (n + 1) * T
    return T, T + kappa / (n + 1)


# --------------------------------------------------------------------- I/O

def _fmt_time(x):
    return "inf" if x is INFINITY else str(x)


def lattice_from_dict(doc: dict) -> tuple[SurfaceLattice, DivisorClass | None]:
    """Parse the structured lattice input document (see schemas/lattice_input.schema.json)."""
    labels = tuple(doc["basis"])
    Q = tuple(tuple(int(x) for x in row) for row in doc["intersection"])
    K = DivisorClass(doc["canonical"])
    bank = tuple(CurveClass(DivisorClass(c["coeffs"]), c["label"]) for c in doc["curves"])
    lat = SurfaceLattice(labels, Q, K, bank)
    L = DivisorClass(doc["ample"]) if "ample" in doc else None
    return lat, L


def lattice_to_dict(lat: SurfaceLattice, ample: DivisorClass | None = None) -> dict:
    doc = {
        "basis": list(lat.basis_labels),
        "intersection": [list(row) for row in lat.intersection_matrix],
        "canonical": lat.canonical.to_strings(),
        "curves": [{"label": c.label, "coeffs": c.cls.to_strings()} for c in lat.curve_bank],
    }
    if ample is not None:
        doc["ample"] = ample.to_strings()
    return doc


def schedule_to_dict(s: SurgerySchedule) -> dict:
    steps = []
    for st in s.steps:
        steps.append({
            "threshold": str(st.threshold),
            "absolute_time": str(st.absolute_time),
            "big_class": st.big_class.to_strings(),
            "scale": st.scale,
            "big_self_intersection": str(self_intersection(st.big_class, st.lattice)),
            "contracted": [
                {
                    "label": c.label,
                    "coeffs": c.cls.to_strings(),
                    "M_dot_C": str(intersect(st.big_class, c.cls, st.lattice)),
                    "C_squared": str(self_intersection(c.cls, st.lattice)),
                    "K_dot_C": str(intersect(st.lattice.canonical, c.cls, st.lattice)),
                }
                for c in st.contracted
            ],
            "kept_indices": list(st.pushforward.kept),
            "next_basis": list(st.next_lattice.basis_labels),
            "next_canonical": st.next_lattice.canonical.to_strings(),
        })
    return {
        "schema": "schedule/v1",
        "initial_basis": list(s.initial_lattice.basis_labels) if s.initial_lattice else None,
        "initial_class": s.initial_class.to_strings() if s.initial_class else None,
        "steps": steps,
        "terminal": s.terminal,
        "terminal_time": _fmt_time(s.terminal_time),
        "terminal_threshold": _fmt_time(s.terminal_threshold),
        "terminal_class": s.terminal_class.to_strings() if s.terminal_class is not None else None,
        "terminal_scale": s.terminal_scale,
        "final_basis": list(s.final_lattice.basis_labels) if s.final_lattice else None,
    }
