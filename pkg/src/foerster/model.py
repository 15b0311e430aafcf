"""Two-atom level schemes and interaction Hamiltonians.

Energies are angular frequencies in rad/us and times are in us.  Use
:func:`two_pi_mhz` to convert a frequency quoted in MHz.

Pair basis ordering is A-major lexicographic: index = i_A * d_B + i_B, with
per-atom level order

* two-eigenstate family: A = (g0, g1, a, alpha), B = (g0, g1, b, beta)
* one-eigenstate model:   A = B = (g0, g1, r)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

QUBIT = "qubit"
RYDBERG = "rydberg"

DEFAULT_TAU_R = 150.0  # us
RWA_WARNING_RATIO = 0.01
DEGENERATE_OVERLAP = 1.0 - 1e-3


class ModelError(ValueError):
    """Invalid model parameters or incompatible model/schedule pairing."""


class SingularChannelError(ModelError):
    pass


def two_pi_mhz(nu_mhz):
    """Convert a frequency in MHz to an angular frequency in rad/us."""
    if np.ndim(nu_mhz):
        return 2.0 * np.pi * np.asarray(nu_mhz, dtype=float)
    return 2.0 * math.pi * float(nu_mhz)


@dataclass(frozen=True)
class LevelScheme:
    levels_a: tuple[str, ...]
    levels_b: tuple[str, ...]
    rydberg_a: frozenset[str]
    rydberg_b: frozenset[str]

    @property
    def dims(self) -> tuple[int, int]:
        return len(self.levels_a), len(self.levels_b)

    @property
    def dim(self) -> int:
        return len(self.levels_a) * len(self.levels_b)

    def levels(self, atom: str) -> tuple[str, ...]:
        return self.levels_a if atom == "A" else self.levels_b

    def tag(self, atom: str, level: str) -> str:
        self.local_index(atom, level)
        ryd = self.rydberg_a if atom == "A" else self.rydberg_b
        return RYDBERG if level in ryd else QUBIT

    def primary_rydberg(self, atom: str) -> str:
        if "r" in self.levels(atom):
            return "r"
        return "a" if atom == "A" else "b"

    def local_index(self, atom: str, level: str) -> int:
        if atom not in ("A", "B"):
            raise ModelError(f"unknown atom {atom!r}")
        levels = self.levels(atom)
        if level == "r" and "r" not in levels:
            level = self.primary_rydberg(atom)
        try:
            return levels.index(level)
        except ValueError:
            raise ModelError(f"level {level!r} does not exist on atom {atom} in {levels}") from None

    def index(self, level_a: str, level_b: str) -> int:
        return self.local_index("A", level_a) * self.dims[1] + self.local_index("B", level_b)

    def ket(self, level_a: str, level_b: str) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(level_a, level_b)] = 1.0
        return v

    @property
    def computational_indices(self) -> list[int]:
        """Pair-basis indices of |00>, |01>, |10>, |11>."""
        return [self.index(a, b) for a in ("g0", "g1") for b in ("g0", "g1")]

    def labels(self) -> list[str]:
        return [f"{a},{b}" for a in self.levels_a for b in self.levels_b]


TWO_STATE_SCHEME = LevelScheme(
    levels_a=("g0", "g1", "a", "alpha"),
    levels_b=("g0", "g1", "b", "beta"),
    rydberg_a=frozenset({"a", "alpha"}),
    rydberg_b=frozenset({"b", "beta"}),
)

ONE_STATE_SCHEME = LevelScheme(
    levels_a=("g0", "g1", "r"),
    levels_b=("g0", "g1", "r"),
    rydberg_a=frozenset({"r"}),
    rydberg_b=frozenset({"r"}),
)


def _check_finite(**params):
    for name, value in params.items():
        if not math.isfinite(value):
            raise ModelError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class ModelSpec:
    """Base class; use one of the concrete variants below."""

    tau_r: float = field(default=DEFAULT_TAU_R, kw_only=True)

    kind = "abstract"

    def __post_init__(self):
        _check_finite(tau_r=self.tau_r)
        if self.tau_r <= 0:
            raise ModelError("rydberg lifetime must be positive")

    @property
    def scheme(self) -> LevelScheme:
        return TWO_STATE_SCHEME

    @property
    def gamma(self) -> float:
        return 1.0 / self.tau_r

    @property
    def interaction_strength(self) -> float:
        """Effective V entering eta = V * T_R."""
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params(), "tau_r": self.tau_r}


@dataclass(frozen=True)
class OneEigenstate(ModelSpec):
    V: float = 1.0
    kind = "one"

    def __post_init__(self):
        super().__post_init__()
        _check_finite(V=self.V)
        if self.V <= 0:
            raise ModelError("V must be positive")

    @property
    def scheme(self) -> LevelScheme:
        return ONE_STATE_SCHEME

    @property
    def interaction_strength(self) -> float:
        return self.V

    def params(self) -> dict:
        return {"V": self.V}


@dataclass(frozen=True)
class TwoEigenstate(ModelSpec):
    V: float = 1.0
    kind = "two"

    def __post_init__(self):
        super().__post_init__()
        _check_finite(V=self.V)
        if self.V <= 0:
            raise ModelError("V must be positive")

    @property
    def interaction_strength(self) -> float:
        return self.V

    def params(self) -> dict:
        return {"V": self.V}


@dataclass(frozen=True)
class ImperfectFoerster(ModelSpec):
    """Detuned exchange block [[0, C], [C, -delta_F]] on {|ab>, |alpha beta>}."""

    C: float = 1.0
    delta_F: float = 0.0
    kind = "imperfect"

    def __post_init__(self):
        super().__post_init__()
        _check_finite(C=self.C, delta_F=self.delta_F)
        if self.C <= 0:
            raise ModelError("C must be positive")

    def channels(self) -> list[tuple[float, float]]:
        """(overlap with |ab>, shift) for the two eigenstates of the exchange block."""
        block = np.array([[0.0, self.C], [self.C, -self.delta_F]])
        evals, evecs = np.linalg.eigh(block)
        return [(float(abs(evecs[0, k]) ** 2), float(evals[k])) for k in range(2)]

    @property
    def interaction_strength(self) -> float:
        return condense_channels(self.channels())

    def params(self) -> dict:
        return {"C": self.C, "delta_F": self.delta_F}


@dataclass(frozen=True)
class PreRWA(ModelSpec):
    V: float = 1.0
    W: float = 1.0
    delta_A: float = 1000.0
    delta_B: float = -1000.0
    kind = "prerwa"

    def __post_init__(self):
        super().__post_init__()
        _check_finite(V=self.V, W=self.W, delta_A=self.delta_A, delta_B=self.delta_B)
        if self.V <= 0:
            raise ModelError("V must be positive")

    @property
    def interaction_strength(self) -> float:
        return self.V

    def params(self) -> dict:
        return {"V": self.V, "W": self.W, "delta_A": self.delta_A, "delta_B": self.delta_B}


MODEL_KINDS = {cls.kind: cls for cls in (OneEigenstate, TwoEigenstate, ImperfectFoerster, PreRWA)}


def model_from_dict(d: dict) -> ModelSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in MODEL_KINDS:
        raise ModelError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    return MODEL_KINDS[kind](**d)


def build_interaction(model: ModelSpec) -> np.ndarray:
    """Static interaction Hamiltonian in the pair basis (rotating frame)."""
    s = model.scheme
    H = np.zeros((s.dim, s.dim), dtype=complex)
    if isinstance(model, OneEigenstate):
        H[s.index("r", "r"), s.index("r", "r")] = model.V
        return H
    ab, xy = s.index("a", "b"), s.index("alpha", "beta")
    if isinstance(model, TwoEigenstate):
        H[ab, xy] = H[xy, ab] = model.V
    elif isinstance(model, ImperfectFoerster):
        H[ab, xy] = H[xy, ab] = model.C
        H[xy, xy] = -model.delta_F
    elif isinstance(model, PreRWA):
        ay, xb = s.index("a", "beta"), s.index("alpha", "b")
        H[ab, xy] = H[xy, ab] = model.V
        H[ay, ay] = model.delta_B
        H[xb, xb] = model.delta_A
        H[ay, xb] = H[xb, ay] = model.W
    else:
        raise ModelError(f"unsupported model {type(model).__name__}")
    return H


def rydberg_number_operator(scheme: LevelScheme) -> np.ndarray:
    """Counting operator Q_A (x) 1 + 1 (x) Q_B; diagonal with entries 0, 1, 2."""
    qa = np.array([lv in scheme.rydberg_a for lv in scheme.levels_a], dtype=float)
    qb = np.array([lv in scheme.rydberg_b for lv in scheme.levels_b], dtype=float)
    counts = np.add.outer(qa, qb).ravel()
    return np.diag(counts).astype(complex)


def condense_channels(channels: Sequence[tuple[float, float]]) -> float:
    """Single-channel effective shift (sum_i o_i / V_i^2)^(-1/2)."""
    channels = list(channels)
    if not channels:
        raise ModelError("empty channel set")
    total_overlap = sum(o for o, _ in channels)
    if abs(total_overlap - 1.0) > 1e-12:
        raise ModelError(f"channel overlaps must sum to 1, got {total_overlap!r}")
    acc = 0.0
    for o, v in channels:
        if not 0.0 < o <= 1.0:
            raise ModelError(f"overlap {o} outside (0, 1]")
        if v == 0:
            raise SingularChannelError("channel with zero shift has infinite weight")
        acc += o / v**2
    return acc**-0.5


def imperfect_params_from_symmetry(o1: float, v_eff: float) -> tuple[float, float]:
    """Return (C, delta_F) realising overlaps (o1, 1 - o1) with condensed shift v_eff.

    With o1 = cos^2(theta) the block eigenvalues are C tan(theta) and
    -C cot(theta); requiring the condensed shift to equal ``v_eff`` fixes C in
    closed form.
    """
    if not 0.5 <= o1 < 1.0:
        raise ModelError(f"o1 must lie in [0.5, 1), got {o1}")
    if o1 > DEGENERATE_OVERLAP:
        raise SingularChannelError(f"o1 = {o1} is a degenerate resonance (one shift -> 0)")
    if not v_eff > 0:
        raise ModelError("effective shift must be positive")
    c2, s2 = o1, 1.0 - o1
    C = v_eff * math.sqrt((c2**3 + s2**3) / (c2 * s2))
    theta = math.acos(math.sqrt(o1))
    # tan(2 theta) = 2C / delta_F
    delta_F = 2.0 * C * math.cos(2 * theta) / math.sin(2 * theta)
    if abs(delta_F) < 1e-15 * C:
        delta_F = 0.0
    return C, delta_F


def imperfect_model(o1: float, v_eff: float, tau_r: float = DEFAULT_TAU_R) -> ImperfectFoerster:
    C, dF = imperfect_params_from_symmetry(o1, v_eff)
    return ImperfectFoerster(C=C, delta_F=dF, tau_r=tau_r)


def rwa_validity(model: PreRWA) -> float:
    """max(V, W) / min(|delta_A|, |delta_B|); values above 0.01 warrant a warning."""
    if model.delta_A == 0 or model.delta_B == 0:
        raise ModelError("RWA ratio undefined for zero single-atom detuning")
    return max(abs(model.V), abs(model.W)) / min(abs(model.delta_A), abs(model.delta_B))
