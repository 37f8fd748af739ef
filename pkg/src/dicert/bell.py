"""Bell functionals, operator realisation, behaviours and candidate checks.

A functional is a list of correlator terms.  Each term carries one setting
label per party: ``X`` or ``Z`` for a measuring party, ``1`` for a silent
one.  Outcomes are binary (+1 / -1).
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .linalg import eig_hermitian, kron_all
from .quantum import I2, SX, SY, SZ, PureState

SQRT2 = math.sqrt(2.0)
LABELS = ("X", "Z")
NO_SIGNALING_TOL = 1e-9


class MissingSettingError(KeyError):
    """A behaviour lacks a setting combination required by a functional."""


@dataclass(frozen=True)
class Term:
    """One correlator E_settings with its coefficient.

    ``form`` records the exact symbolic coefficient (e.g. ``"-s*sqrt2/20"``).
    """

    settings: str
    coefficient: float
    form: str = ""

    @property
    def measuring(self) -> tuple[int, ...]:
        return tuple(i for i, ch in enumerate(self.settings) if ch != "1")


@dataclass(frozen=True)
class BellFunctional:
    parties: int
    terms: tuple[Term, ...]
    name: str = ""

    def __post_init__(self) -> None:
        for t in self.terms:
            if len(t.settings) != self.parties:
                raise ValueError(f"term {t.settings!r} does not have {self.parties} settings")
            if any(ch not in "XZ1" for ch in t.settings):
                raise ValueError(f"term {t.settings!r} uses labels outside X, Z, 1")

    def coefficient(self, settings: str) -> float:
        return sum(t.coefficient for t in self.terms if t.settings == settings)

    def scaled(self, factor: float, name: str | None = None) -> "BellFunctional":
        terms = tuple(Term(t.settings, factor * t.coefficient, f"{factor!r}*({t.form})") for t in self.terms)
        return BellFunctional(self.parties, terms, name or self.name)

    def digest_items(self) -> list[tuple[str, str]]:
        return [(t.settings, repr(float(t.coefficient))) for t in self.terms]


def chsh_functional() -> BellFunctional:
    """E_XX + E_XZ + E_ZX - E_ZZ."""
    terms = (Term("XX", 1.0, "1"), Term("XZ", 1.0, "1"), Term("ZX", 1.0, "1"), Term("ZZ", -1.0, "-1"))
    return BellFunctional(2, terms, "CHSH")


_B_PHI_GROUPS: tuple[tuple[str, tuple[tuple[int, str], ...]], ...] = (
    ("2*sqrt2", ((1, "XX11"), (1, "ZX11"))),
    ("s", ((1, "X1ZX"), (-1, "X1XX"), (-1, "X1XZ"), (-1, "X1ZZ"),
           (1, "Z1ZX"), (-1, "Z1XX"), (-1, "Z1XZ"), (-1, "Z1ZZ"))),
    ("c*sqrt2", ((1, "11ZX"), (-1, "11XZ"), (1, "11XX"), (1, "11ZZ"))),
    ("s*sqrt2", ((1, "1XZX"), (-1, "1XXX"), (-1, "1XXZ"), (-1, "1XZZ"))),
    ("c", ((1, "XXZX"), (-1, "XXXZ"), (1, "XXXX"), (1, "XXZZ"),
           (1, "ZXZX"), (-1, "ZXXZ"), (1, "ZXXX"), (1, "ZXZZ"))),
    ("2", ((1, "ZZZX"), (-1, "ZZXZ"), (1, "ZZXX"), (1, "ZZZZ"),
           (-1, "XZZX"), (1, "XZXZ"), (-1, "XZXX"), (-1, "XZZZ"))),
)


def _group_value(form: str, c: float, s: float) -> float:
    return {"2*sqrt2": 2 * SQRT2, "s": s, "c*sqrt2": c * SQRT2,
            "s*sqrt2": s * SQRT2, "c": c, "2": 2.0}[form]


def b_phi_functional(phi: float) -> BellFunctional:
    """Four-party functional (order B1 A1 A2 B2) maximised by xi_phi, overall factor 1/20."""
    c, s = math.cos(phi), math.sin(phi)
    terms = []
    for form, group in _B_PHI_GROUPS:
        base = _group_value(form, c, s)
        for sign, label in group:
            terms.append(Term(label, sign * base / 20.0, f"{'+' if sign > 0 else '-'}{form}/20"))
    return BellFunctional(4, tuple(terms), f"B_phi({phi!r})")


def b_phi_local_bound_closed_form(phi: float) -> float:
    """((sqrt2 + 1)(|cos phi| + |sin phi|) + 2) / (5 sqrt2).

    On phi in [0, pi/2] this is the published expression with c + s.
    """
    return ((SQRT2 + 1) * (abs(math.cos(phi)) + abs(math.sin(phi))) + 2) / (5 * SQRT2)


@dataclass(frozen=True)
class MeasurementAssignment:
    """Per party, the observables assigned to settings X and Z."""

    observables: tuple[Mapping[str, np.ndarray], ...]

    def __post_init__(self) -> None:
        obs = []
        for k, d in enumerate(self.observables):
            entry = {}
            for lab, o in d.items():
                o = np.asarray(o, dtype=complex)
                if o.shape != (2, 2):
                    raise ValueError(f"party {k} setting {lab}: observable must be 2x2")
                if np.max(np.abs(o - o.conj().T)) > 1e-10 or np.max(np.abs(o @ o - I2)) > 1e-10:
                    raise ValueError(f"party {k} setting {lab}: observable must be Hermitian and square to 1")
                entry[lab] = o
            obs.append(entry)
        object.__setattr__(self, "observables", tuple(obs))

    @property
    def parties(self) -> int:
        return len(self.observables)

    def get(self, party: int, label: str) -> np.ndarray:
        try:
            return self.observables[party][label]
        except (IndexError, KeyError):
            raise KeyError(f"no observable assigned to party {party}, setting {label}") from None

    def replace(self, party: int, label: str, obs: np.ndarray, check: bool = True) -> "MeasurementAssignment":
        new = [dict(d) for d in self.observables]
        new[party][label] = obs
        if check:
            return MeasurementAssignment(tuple(new))
        out = object.__new__(MeasurementAssignment)
        object.__setattr__(out, "observables", tuple(new))
        return out


def chsh_assignment() -> MeasurementAssignment:
    """A: sigma_x, sigma_z; B: (sigma_x +- sigma_z)/sqrt2 - reaches 2 sqrt2 on |phi+>."""
    return MeasurementAssignment((
        {"X": SX, "Z": SZ},
        {"X": (SX + SZ) / SQRT2, "Z": (SX - SZ) / SQRT2},
    ))


def b_phi_assignment(phi: float) -> MeasurementAssignment:
    """Observables for which xi_phi is the maximal eigenstate of B_phi (value 1)."""
    t = phi - math.pi / 4
    return MeasurementAssignment((
        {"X": -(SX + SZ) / SQRT2, "Z": (SX - SZ) / SQRT2},
        {"X": -SZ, "Z": SX},
        {"X": math.cos(t) * SY + math.sin(t) * SZ, "Z": -math.sin(t) * SY + math.cos(t) * SZ},
        {"X": -SY, "Z": SZ},
    ))


def b_phi_assignment_printed(phi: float) -> MeasurementAssignment:
    """The published table of observables; its maximal eigenstate is only
    locally-unitarily equivalent to xi_phi (kept for comparison)."""
    c, s = math.cos(phi), math.sin(phi)
    b1 = {"X": -(SX + SZ) / SQRT2, "Z": (SX - SZ) / SQRT2}
    return MeasurementAssignment((
        b1, dict(b1),
        {"X": c * SY + s * SZ, "Z": -s * SY + c * SZ},
        {"X": -SY, "Z": SZ},
    ))


def realize_operator(f: BellFunctional, m: MeasurementAssignment, scale: float = 1.0) -> np.ndarray:
    """Bell operator sum_t c_t (x)_k O_{k, t_k}; silent parties get the identity.

    ``scale`` multiplies every non-trivial observable (white measurement noise).
    """
    if m.parties != f.parties:
        raise ValueError(f"assignment has {m.parties} parties, functional {f.parties}")
    dim = 2 ** f.parties
    out = np.zeros((dim, dim), dtype=complex)
    for t in f.terms:
        factors = [I2 if ch == "1" else scale * m.get(k, ch) for k, ch in enumerate(t.settings)]
        out += t.coefficient * kron_all(factors)
    return 0.5 * (out + out.conj().T)


@dataclass
class Behavior:
    """Conditional outcome distributions P(outcomes | settings).

    ``table`` maps a settings string (``X``/``Z``/``1`` per party) to a mapping
    from outcome strings (``+``/``-`` for each measuring party, in party order)
    to probabilities.
    """

    parties: int
    table: dict[str, dict[str, float]] = field(default_factory=dict)
    default_silent: str = "X"

    def __post_init__(self) -> None:
        for settings, dist in self.table.items():
            if len(settings) != self.parties or any(ch not in "XZ1" for ch in settings):
                raise ValueError(f"invalid settings string {settings!r}")
            k = sum(ch != "1" for ch in settings)
            total = 0.0
            for out, p in dist.items():
                if len(out) != k or any(ch not in "+-" for ch in out):
                    raise ValueError(f"invalid outcome string {out!r} for settings {settings!r}")
                if p < -1e-12:
                    raise ValueError(f"negative probability {p} for {settings}/{out}")
                total += p
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"distribution for settings {settings!r} sums to {total:.12f}")

    def correlator(self, settings: str) -> float:
        """E_settings; marginal correlators are taken from a full setting tuple."""
        if settings in self.table:
            return _signed_sum(self.table[settings])
        measuring = [i for i, ch in enumerate(settings) if ch != "1"]
        silent = [i for i, ch in enumerate(settings) if ch == "1"]
        candidates = []
        for fill in itertools.product(LABELS, repeat=len(silent)):
            full = list(settings)
            for i, lab in zip(silent, fill):
                full[i] = lab
            key = "".join(full)
            if key in self.table:
                candidates.append((fill, key))
        if not candidates:
            raise MissingSettingError(f"behavior lacks settings {settings!r} (or any full tuple containing it)")
        values = []
        for _, key in candidates:
            dist = self.table[key]
            values.append(sum(p * _sign(out, measuring) for out, p in dist.items()))
        preferred = next((v for (fill, _), v in zip(candidates, values)
                          if all(x == self.default_silent for x in fill)), values[0])
        spread = max(values) - min(values)
        if spread > NO_SIGNALING_TOL:
            warnings.warn(f"marginal correlator {settings} depends on silent settings "
                          f"(spread {spread:.2e}); no-signaling violated", RuntimeWarning, stacklevel=2)
        return float(preferred)

    def no_signaling_violation(self) -> float:
        """Largest dependence of any single-party-subset marginal on the other settings."""
        worst = 0.0
        full_keys = [k for k in self.table if "1" not in k]
        for mask in itertools.product((0, 1), repeat=self.parties):
            if not any(mask) or all(mask):
                continue
            groups: dict[str, list[np.ndarray]] = {}
            for key in full_keys:
                sub = "".join(ch for ch, m in zip(key, mask) if m)
                groups.setdefault(sub, []).append(self._marginal(key, mask))
            for vecs in groups.values():
                arr = np.array(vecs)
                worst = max(worst, float(np.max(arr.max(axis=0) - arr.min(axis=0))))
        return worst

    def _marginal(self, key: str, mask: Sequence[int]) -> np.ndarray:
        keep = [i for i, m in enumerate(mask) if m]
        outs = ["".join(o) for o in itertools.product("+-", repeat=len(keep))]
        vec = np.zeros(len(outs))
        for out, p in self.table[key].items():
            vec[outs.index("".join(out[i] for i in keep))] += p
        return vec

    @classmethod
    def from_quantum(cls, rho: np.ndarray, m: MeasurementAssignment,
                     settings: Iterable[str] | None = None) -> "Behavior":
        """Born-rule behaviour of state ``rho`` measured with assignment ``m``."""
        n = m.parties
        rho = np.asarray(rho, dtype=complex)
        if rho.ndim == 1:
            rho = np.outer(rho, rho.conj())
        keys = list(settings) if settings is not None else ["".join(s) for s in itertools.product(LABELS, repeat=n)]
        table: dict[str, dict[str, float]] = {}
        for key in keys:
            measuring = [i for i, ch in enumerate(key) if ch != "1"]
            dist = {}
            for outs in itertools.product("+-", repeat=len(measuring)):
                factors = []
                j = 0
                for k, ch in enumerate(key):
                    if ch == "1":
                        factors.append(I2)
                    else:
                        sgn = 1.0 if outs[j] == "+" else -1.0
                        factors.append(0.5 * (I2 + sgn * m.get(k, ch)))
                        j += 1
                p = float(np.real(np.trace(rho @ kron_all(factors))))
                dist["".join(outs)] = max(p, 0.0)
            total = sum(dist.values())
            table[key] = {o: p / total for o, p in dist.items()}
        return cls(n, table)

    @classmethod
    def from_csv(cls, path: str, parties: int | None = None) -> "Behavior":
        """Load ``settings,outcomes,probability`` rows; weights are normalised per setting."""
        raw: dict[str, dict[str, float]] = {}
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.lstrip().startswith("#"))]
        if not rows or [h.strip() for h in rows[0]] != ["settings", "outcomes", "probability"]:
            raise ValueError("behavior CSV must start with header settings,outcomes,probability")
        for r in rows[1:]:
            if not r:
                continue
            settings, outs, p = r[0].strip(), r[1].strip(), float(r[2])
            if p < 0:
                raise ValueError(f"negative weight {p} for {settings}/{outs}")
            raw.setdefault(settings, {})
            raw[settings][outs] = raw[settings].get(outs, 0.0) + p
        n = parties if parties is not None else len(next(iter(raw)))
        table = {}
        for settings, dist in raw.items():
            total = sum(dist.values())
            if total <= 0:
                raise ValueError(f"settings {settings!r} have zero total weight")
            table[settings] = {o: p / total for o, p in dist.items()}
        b = cls(n, table)
        viol = b.no_signaling_violation()
        if viol > NO_SIGNALING_TOL:
            warnings.warn(f"behavior violates no-signaling by {viol:.2e}", RuntimeWarning, stacklevel=2)
        return b

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["settings", "outcomes", "probability"])
            for settings in sorted(self.table):
                for out in sorted(self.table[settings]):
                    w.writerow([settings, out, repr(self.table[settings][out])])


def _sign(out: str, positions: Sequence[int] | None = None) -> int:
    chars = out if positions is None else [out[i] for i in positions]
    return -1 if sum(ch == "-" for ch in chars) % 2 else 1


def _signed_sum(dist: Mapping[str, float]) -> float:
    return float(sum(p * _sign(out) for out, p in dist.items()))


def evaluate_on_behavior(f: BellFunctional, b: Behavior) -> float:
    """sum_t c_t E_t on the behaviour."""
    if f.parties != b.parties:
        raise ValueError(f"functional has {f.parties} parties, behavior {b.parties}")
    return float(sum(t.coefficient * b.correlator(t.settings) for t in f.terms))


def local_bound(f: BellFunctional) -> float:
    """Maximum over local deterministic strategies (exhaustive enumeration)."""
    n = f.parties
    if n > 4:
        raise ValueError("exact enumeration is limited to at most 4 parties")
    # strategies: each party picks outcomes (o_X, o_Z) in {+1,-1}^2
    per_party = np.array(list(itertools.product((1, -1), repeat=2)))  # (4, 2)
    best = -math.inf
    for combo in itertools.product(range(4), repeat=n):
        val = 0.0
        for t in f.terms:
            prod = 1
            for k, ch in enumerate(t.settings):
                if ch != "1":
                    prod *= per_party[combo[k], 0 if ch == "X" else 1]
            val += t.coefficient * prod
        best = max(best, val)
    return float(best)


@dataclass
class CandidateReport:
    lambda_max: float
    gap: float
    target_overlap: float
    unique_maximizer: bool
    max_value_is_one: bool
    first_order: dict[str, float]
    second_order: dict[str, float]
    local_maximum: bool
    delta: float

    @property
    def passed(self) -> bool:
        return self.unique_maximizer and self.max_value_is_one and self.local_maximum

    def failed_checks(self) -> list[str]:
        out = []
        if not self.unique_maximizer:
            out.append("unique_maximal_eigenstate")
        if not self.max_value_is_one:
            out.append("maximal_value_one")
        if not self.local_maximum:
            out.append("local_maximum")
        return out

    def to_json(self) -> dict:
        return {"lambda_max": self.lambda_max, "gap": self.gap, "target_overlap": self.target_overlap,
                "unique_maximizer": self.unique_maximizer, "max_value_is_one": self.max_value_is_one,
                "local_maximum": self.local_maximum, "delta": self.delta,
                "first_order": self.first_order, "second_order": self.second_order,
                "passed": self.passed, "failed_checks": self.failed_checks()}


def verify_candidate(f: BellFunctional, m: MeasurementAssignment, target: PureState,
                     delta: float = 0.01) -> CandidateReport:
    """Necessary conditions for a (functional, observables, state) candidate.

    (a) the target spans the non-degenerate top eigenspace; (b) the top
    eigenvalue is 1; (c) perturbing any observable as O -> O(1 - d^2/2) + d O'
    (O' the party's other observable) leaves the top eigenvalue stationary to
    first order and strictly decreases it to second order.  Derivatives use
    central differences at d and d/2 with Richardson extrapolation.
    """
    if not 0.0 < delta <= 0.1:
        raise ValueError("delta must lie in (0, 0.1]")
    dec = eig_hermitian(realize_operator(f, m))
    w, v = dec.eigenvalues, dec.eigenvectors
    lam = float(w[-1])
    gap = float(w[-1] - w[-2]) if w.size > 1 else math.inf
    ov = float(abs(np.vdot(v[:, -1], target.amplitudes)) ** 2)
    unique = gap > 1e-6 and ov >= 1 - 1e-6
    first: dict[str, float] = {}
    second: dict[str, float] = {}
    local_max = True

    def lam_at(party: int, lab: str, d: float) -> float:
        other = "Z" if lab == "X" else "X"
        o = m.get(party, lab) * (1 - d * d / 2) + d * m.get(party, other)
        mm = m.replace(party, lab, o, check=False)
        return float(eig_hermitian(realize_operator(f, mm)).eigenvalues[-1])

    for party in range(m.parties):
        for lab in LABELS:
            if all(t.settings[party] != lab for t in f.terms):
                continue
            lp, lm = lam_at(party, lab, delta), lam_at(party, lab, -delta)
            hp, hm = lam_at(party, lab, delta / 2), lam_at(party, lab, -delta / 2)
            d1 = (lp - lm) / (2 * delta)
            d1h = (hp - hm) / delta
            deriv = (4 * d1h - d1) / 3
            c2 = (lp + lm - 2 * lam) / delta ** 2
            c2h = (hp + hm - 2 * lam) / (delta / 2) ** 2
            curv = (4 * c2h - c2) / 3
            key = f"party{party}:{lab}"
            first[key] = float(deriv)
            second[key] = float(curv)
            if abs(deriv) > 1e-6 * delta or not curv < -1e-6:
                local_max = False
    return CandidateReport(lam, gap, ov, unique, abs(lam - 1.0) <= 1e-9, first, second, local_max, delta)
