"""Drive waveforms, schedules and the four gate protocols.

A :class:`Schedule` is an ordered list of :class:`Segment` objects.  Each
segment carries a duration and a set of :class:`DriveLine` objects whose
waveforms are evaluated in segment-local time ``t in [0, duration]``.  Every
line contributes

    (Omega/2) (exp(i phi) |g><r| + exp(-i phi) |r><g|) - Delta |r><r|

to the rotating-frame Hamiltonian of its atom.  The Rydberg level name ``"r"``
addresses the primary Rydberg level of an atom (``a`` on A, ``b`` on B in the
two-eigenstate family), so rank-one schedules run unchanged under every model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import ClassVar

import numpy as np
from scipy.special import gamma as gamma_fn

from .model import ModelError, ModelSpec, build_interaction

QUBIT_LEVELS = ("g0", "g1")
MIN_RANK_TWO_V = 1e-6
TO_GATE_TIME = 7.612  # in units of 1/Omega


class ScheduleError(ValueError):
    pass


# -- waveforms ---------------------------------------------------------------

WAVEFORMS: dict[str, type] = {}


def _register(cls):
    WAVEFORMS[cls.kind] = cls
    return cls


class Waveform:
    kind: ClassVar[str] = ""
    static: ClassVar[bool] = False

    def __call__(self, t):
        raise NotImplementedError

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d


def waveform_from_dict(d: dict) -> Waveform:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in WAVEFORMS:
        raise ScheduleError(f"unknown waveform kind {kind!r}")
    cls = WAVEFORMS[kind]
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@_register
@dataclass(frozen=True)
class Constant(Waveform):
    value: float = 0.0
    kind: ClassVar[str] = "constant"
    static: ClassVar[bool] = True

    def __call__(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.value)


ZERO = Constant(0.0)


def super_gaussian(t, t0, tau, omega_max, degree=6):
    """omega_max * exp(-((t - t0) / tau)**degree)."""
    if tau <= 0:
        raise ScheduleError("super-Gaussian width must be positive")
    return omega_max * np.exp(-(((np.asarray(t, dtype=float) - t0) / tau) ** degree))


def super_gaussian_area_factor(degree=6) -> float:
    """Integral of exp(-x**degree) over the real line, 2 Gamma(1 + 1/degree)."""
    return 2.0 * float(gamma_fn(1.0 + 1.0 / degree))


@_register
@dataclass(frozen=True)
class SuperGaussianTrain(Waveform):
    """Sum of super-Gaussian pulses sharing one peak amplitude."""

    amplitude: float
    centers: tuple[float, ...]
    widths: tuple[float, ...]
    degree: int = 6
    kind: ClassVar[str] = "super_gaussian"

    def __post_init__(self):
        if len(self.centers) != len(self.widths):
            raise ScheduleError("centers and widths differ in length")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for c, w in zip(self.centers, self.widths):
            out = out + super_gaussian(t, c, w, self.amplitude, self.degree)
        return out


@_register
@dataclass(frozen=True)
class ARPEnvelope(Waveform):
    """Omega_max (exp(-(t - t0)^4 / tau^4) - a) / (1 - a), a = exp(-(t0/tau)^4)."""

    amplitude: float
    t0: float
    tau: float
    kind: ClassVar[str] = "arp_envelope"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        a = math.exp(-((self.t0 / self.tau) ** 4))
        return self.amplitude * (np.exp(-(((t - self.t0) / self.tau) ** 4)) - a) / (1.0 - a)


@_register
@dataclass(frozen=True)
class CosineChirp(Waveform):
    """-amplitude * cos(2 pi t / period)."""

    amplitude: float
    period: float
    kind: ClassVar[str] = "cosine_chirp"

    def __call__(self, t):
        return -self.amplitude * np.cos(2.0 * np.pi * np.asarray(t, dtype=float) / self.period)


@_register
@dataclass(frozen=True)
class TOPhase(Waveform):
    """A cos(freq (t - center) - offset) + slope t."""

    A: float
    freq: float
    offset: float
    slope: float
    center: float
    kind: ClassVar[str] = "to_phase"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.A * np.cos(self.freq * (t - self.center) - self.offset) + self.slope * t

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return -self.A * self.freq * np.sin(self.freq * (t - self.center) - self.offset) + self.slope


# -- schedules ---------------------------------------------------------------


@dataclass(frozen=True)
class DriveLine:
    atom: str
    lower: str
    upper: str
    rabi: Waveform
    phase: Waveform = ZERO
    detuning: Waveform = ZERO

    def __post_init__(self):
        if self.atom not in ("A", "B"):
            raise ScheduleError(f"unknown atom {self.atom!r}")
        if self.lower not in QUBIT_LEVELS:
            raise ScheduleError(f"drive must start on a qubit level, got {self.lower!r}")
        if self.upper in QUBIT_LEVELS:
            raise ScheduleError(f"drive must end on a Rydberg level, got {self.upper!r}")

    @property
    def static(self) -> bool:
        return self.rabi.static and self.phase.static and self.detuning.static

    def to_dict(self) -> dict:
        return {
            "atom": self.atom,
            "lower": self.lower,
            "upper": self.upper,
            "rabi": self.rabi.to_dict(),
            "phase": self.phase.to_dict(),
            "detuning": self.detuning.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DriveLine":
        return cls(
            atom=d["atom"],
            lower=d["lower"],
            upper=d["upper"],
            rabi=waveform_from_dict(d["rabi"]),
            phase=waveform_from_dict(d.get("phase", {"kind": "constant"})),
            detuning=waveform_from_dict(d.get("detuning", {"kind": "constant"})),
        )


@dataclass(frozen=True)
class Segment:
    duration: float
    lines: tuple[DriveLine, ...] = ()

    def __post_init__(self):
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ScheduleError(f"segment duration must be positive and finite, got {self.duration}")
        for atom in ("A", "B"):
            mine = [ln for ln in self.lines if ln.atom == atom]
            lowers = [ln.lower for ln in mine]
            uppers = [ln.upper for ln in mine]
            if len(set(lowers)) != len(lowers) or len(set(uppers)) != len(uppers):
                raise ScheduleError(f"atom {atom}: a level is driven by more than one line")
        ts = np.linspace(0.0, self.duration, 257)
        for ln in self.lines:
            if np.min(ln.rabi(ts)) < -1e-12:
                raise ScheduleError("Rabi amplitude must be non-negative")

    @property
    def static(self) -> bool:
        return all(ln.static for ln in self.lines)


@dataclass(frozen=True)
class Schedule:
    segments: tuple[Segment, ...]
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.segments:
            raise ScheduleError("schedule has no segments")

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def rank(self) -> int:
        per_atom = {"A": set(), "B": set()}
        for seg in self.segments:
            for ln in seg.lines:
                per_atom[ln.atom].add((ln.lower, ln.upper))
        return max(len(v) for v in per_atom.values())

    def locate(self, t: float) -> tuple[int, float]:
        """Segment index and local time for global time t."""
        b = self.boundaries
        if t < 0 or t > b[-1] * (1 + 1e-12):
            raise ScheduleError(f"time {t} outside [0, {b[-1]}]")
        i = int(np.clip(np.searchsorted(b, t, side="right") - 1, 0, len(self.segments) - 1))
        return i, t - b[i]

    def waveform_table(self, n: int = 2000) -> dict[str, np.ndarray]:
        """Sampled (t, Omega, phi, Delta) per atom for the primary drive line."""
        ts = np.linspace(0.0, self.duration, n)
        cols = {"t_us": ts}
        for atom in ("A", "B"):
            for q in ("Omega", "phi", "Delta"):
                cols[f"{q}_{atom}"] = np.zeros(n)
        b = self.boundaries
        for i, seg in enumerate(self.segments):
            mask = (ts >= b[i]) & ((ts < b[i + 1]) | (i == len(self.segments) - 1))
            local = ts[mask] - b[i]
            for atom in ("A", "B"):
                lines = [ln for ln in seg.lines if ln.atom == atom]
                if not lines:
                    continue
                ln = lines[0]
                cols[f"Omega_{atom}"][mask] = ln.rabi(local)
                cols[f"phi_{atom}"][mask] = ln.phase(local)
                cols[f"Delta_{atom}"][mask] = ln.detuning(local)
        return cols

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "segments": [
                {"duration": s.duration, "lines": [ln.to_dict() for ln in s.lines]} for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        segs = tuple(
            Segment(float(s["duration"]), tuple(DriveLine.from_dict(x) for x in s.get("lines", [])))
            for s in d["segments"]
        )
        return cls(segs, name=d.get("name", ""))


# -- protocols ---------------------------------------------------------------


def pi_2pi_pi_schedule(omega_max: float, overlap_fraction: float = 1e-3, degree: int = 6) -> Schedule:
    """Control pi, target 2pi, control pi with super-Gaussian envelopes.

    Widths follow from the pulse areas; adjacent envelopes cross at
    ``overlap_fraction * omega_max`` and the schedule starts and ends where
    the outer envelopes fall to that level.
    """
    if omega_max <= 0:
        raise ScheduleError("omega_max must be positive")
    if not 0 < overlap_fraction < 1:
        raise ScheduleError("overlap fraction must lie in (0, 1)")
    k = super_gaussian_area_factor(degree)
    tau_pi = math.pi / (k * omega_max)
    tau_2pi = 2.0 * tau_pi
    reach = math.log(1.0 / overlap_fraction) ** (1.0 / degree)
    c1 = tau_pi * reach
    c2 = c1 + (tau_pi + tau_2pi) * reach
    c3 = c2 + (tau_2pi + tau_pi) * reach
    total = c3 + tau_pi * reach
    control = DriveLine("A", "g1", "r", SuperGaussianTrain(omega_max, (c1, c3), (tau_pi, tau_pi), degree))
    target = DriveLine("B", "g1", "r", SuperGaussianTrain(omega_max, (c2,), (tau_2pi,), degree))
    return Schedule(
        (Segment(total, (control, target)),),
        name="pi_2pi_pi",
        meta={"centers": (c1, c2, c3), "widths": (tau_pi, tau_2pi, tau_pi)},
    )


def arp_schedule(
    omega_max: float,
    delta_r: float,
    T: float,
    t0: float | None = None,
    tau: float | None = None,
    n_pulses: int = 2,
) -> Schedule:
    """Back-to-back ARP pulses applied simultaneously to both atoms (g1 -> r).

    Defaults: t0 = T/2, tau = 0.175 T.
    """
    t0 = T / 2 if t0 is None else t0
    tau = 0.175 * T if tau is None else tau
    if not (T > 0 and 0 < t0 < T and tau > 0):
        raise ScheduleError("ARP needs T > 0, 0 < t0 < T, tau > 0")
    if n_pulses < 1:
        raise ScheduleError("need at least one ARP pulse")
    rabi = ARPEnvelope(omega_max, t0, tau)
    chirp = CosineChirp(delta_r, T)
    lines = tuple(DriveLine(atom, "g1", "r", rabi, ZERO, chirp) for atom in ("A", "B"))
    return Schedule(
        tuple(Segment(T, lines) for _ in range(n_pulses)),
        name="arp",
        meta={"omega_max": omega_max, "delta_r": delta_r, "T": T, "t0": t0, "tau": tau},
    )


def to_phase(omega: float, A: float, w: float, phi: float, d: float, T: float | None = None) -> TOPhase:
    """Phase ansatz with frequency w and slope d given in units of Omega."""
    T = TO_GATE_TIME / omega if T is None else T
    return TOPhase(A=A, freq=w * omega, offset=phi, slope=d * omega, center=T / 2)


def to_schedule(omega: float, A: float, w: float, phi: float, d: float, T: float | None = None) -> Schedule:
    """Time-optimal gate: constant global drive with phase
    A cos(w Omega (t - T/2) - phi) + d Omega t."""
    if not omega > 0:
        raise ScheduleError("Omega must be positive")
    T = TO_GATE_TIME / omega if T is None else T
    phase = to_phase(omega, A, w, phi, d, T)
    lines = tuple(DriveLine(atom, "g1", "r", Constant(omega), phase) for atom in ("A", "B"))
    return Schedule(
        (Segment(T, lines),), name="to", meta={"omega": omega, "A": A, "w": w, "phi": phi, "d": d, "T": T}
    )


def rank_two_schedule(omega: float, V: float) -> Schedule:
    """Crossed rank-two pi - gap - pi sequence.

    A: g0 <-> alpha, g1 <-> a;  B: g0 <-> b, g1 <-> beta.
    """
    if not omega > 0:
        raise ScheduleError("Omega must be positive")
    if not V >= MIN_RANK_TWO_V:
        raise ScheduleError(f"V = {V} too small: the gap time pi/(4V) diverges")
    amp = Constant(omega)
    lines = (
        DriveLine("A", "g0", "alpha", amp),
        DriveLine("A", "g1", "a", amp),
        DriveLine("B", "g0", "b", amp),
        DriveLine("B", "g1", "beta", amp),
    )
    t_pi = math.pi / omega
    t_gap = math.pi / (4.0 * V)
    return Schedule(
        (Segment(t_pi, lines), Segment(t_gap), Segment(t_pi, lines)),
        name="rank_two",
        meta={"omega": omega, "V": V},
    )


# -- Hamiltonian assembly ------------------------------------------------------


def _lift(op: np.ndarray, atom: str, dims: tuple[int, int]) -> np.ndarray:
    if atom == "A":
        return np.kron(op, np.eye(dims[1]))
    return np.kron(np.eye(dims[0]), op)


@dataclass
class _CompiledLine:
    line: DriveLine
    lower: np.ndarray  # lifted |g><r|
    number: np.ndarray  # lifted |r><r|


class DriveAssembler:
    """Precomputed pair-space operators for one (model, schedule) pair."""

    def __init__(self, model: ModelSpec, schedule: Schedule):
        self.model = model
        self.schedule = schedule
        self.scheme = model.scheme
        self.H_int = build_interaction(model)
        dims = self.scheme.dims
        self.segments: list[list[_CompiledLine]] = []
        for seg in schedule.segments:
            compiled = []
            for ln in seg.lines:
                for lv in (ln.lower, ln.upper):
                    try:
                        self.scheme.local_index(ln.atom, lv)
                    except ModelError as exc:
                        raise ModelError(
                            f"schedule {schedule.name or '?'} is incompatible with {type(model).__name__}: {exc}"
                        ) from None
                gi = self.scheme.local_index(ln.atom, ln.lower)
                ri = self.scheme.local_index(ln.atom, ln.upper)
                if self.scheme.tag(ln.atom, self.scheme.levels(ln.atom)[ri]) != "rydberg":
                    raise ModelError(f"drive target {ln.upper!r} is not a Rydberg level")
                d = dims[0] if ln.atom == "A" else dims[1]
                low = np.zeros((d, d), dtype=complex)
                low[gi, ri] = 1.0
                num = np.zeros((d, d), dtype=complex)
                num[ri, ri] = 1.0
                compiled.append(_CompiledLine(ln, _lift(low, ln.atom, dims), _lift(num, ln.atom, dims)))
            self.segments.append(compiled)
        per_atom: dict[str, set] = {"A": set(), "B": set()}
        for seg in schedule.segments:
            for ln in seg.lines:
                per_atom[ln.atom].add(self.scheme.local_index(ln.atom, ln.upper))
        if max(len(v) for v in per_atom.values()) > 1 and "r" in self.scheme.levels_a:
            raise ModelError("rank-two schedule needs a two-eigenstate-family model")

    def hamiltonians(self, seg: int, t) -> np.ndarray:
        """H(t) for an array of segment-local times; shape (n, d, d)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        H = np.broadcast_to(self.H_int, (t.size,) + self.H_int.shape).copy()
        for cl in self.segments[seg]:
            om = cl.line.rabi(t)
            ph = cl.line.phase(t)
            de = cl.line.detuning(t)
            c = 0.5 * om * np.exp(1j * ph)
            H += c[:, None, None] * cl.lower + np.conj(c)[:, None, None] * cl.lower.T
            H -= de[:, None, None] * cl.number
        return H

    def hamiltonian(self, seg: int, t: float) -> np.ndarray:
        H = self.H_int.copy()
        for cl in self.segments[seg]:
            om = float(cl.line.rabi(t))
            ph = float(cl.line.phase(t))
            de = float(cl.line.detuning(t))
            c = 0.5 * om * complex(math.cos(ph), math.sin(ph))
            if c != 0:
                H += c * cl.lower + c.conjugate() * cl.lower.T
            if de != 0:
                H -= de * cl.number
        return H

    def coupling_pattern(self) -> np.ndarray:
        """Boolean union of the non-zero patterns of H_int and every drive term."""
        pat = np.abs(self.H_int) > 0
        for seg in self.segments:
            for cl in seg:
                pat |= (np.abs(cl.lower) > 0) | (np.abs(cl.lower.T) > 0) | (np.abs(cl.number) > 0)
        return pat

    def restricted(self, idx: np.ndarray) -> "DriveAssembler":
        """Copy acting on the sub-block ``idx`` (must be an invariant block)."""
        sub = object.__new__(DriveAssembler)
        sub.model, sub.schedule, sub.scheme = self.model, self.schedule, self.scheme
        ix = np.ix_(idx, idx)
        sub.H_int = self.H_int[ix]
        sub.segments = [[_CompiledLine(cl.line, cl.lower[ix], cl.number[ix]) for cl in seg] for seg in self.segments]
        return sub

    def norm_bound(self, seg: int, n: int = 64) -> float:
        """Upper estimate of max ||H(t)|| over the segment (for step control)."""
        ts = np.linspace(0.0, self.schedule.segments[seg].duration, n)
        Hs = self.hamiltonians(seg, ts)
        return float(np.max(np.abs(Hs).sum(axis=2)))


def assemble_drive(model: ModelSpec, schedule: Schedule, t: float) -> np.ndarray:
    """Total rotating-frame Hamiltonian H_int + H_drive(t) at global time t."""
    asm = DriveAssembler(model, schedule)
    seg, local = schedule.locate(t)
    return asm.hamiltonian(seg, local)
