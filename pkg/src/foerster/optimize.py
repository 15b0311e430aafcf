"""Multistart quasi-Newton optimisation of pulse parameters.

The local stage is L-BFGS-B driven by central-difference gradients.  The
global stage runs local refinements from uniform random starts and then from
Gaussian perturbations of the best point found so far.  Everything is
reproducible from the seed, and runs can be resumed from a JSON checkpoint.
"""

from __future__ import annotations

import functools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .metrics import CZ, GateReport, evaluate_gate, gate_fidelity
from .model import ModelSpec
from .propagate import PropagationOptions
from .pulses import TO_GATE_TIME, ARPEnvelope, CosineChirp, Schedule, ScheduleError, arp_schedule, to_schedule

GRAD_STEP = 1e-6
GTOL = 1e-8
MAX_ITER = 500

TO_PARAM_NAMES = ("delta", "A", "omega", "phi")
TO_BOUNDS = ((-2.0, 2.0), (0.0, 2 * math.pi), (0.1, 3.0), (-math.pi, math.pi))
# fixed-step propagation keeps the objective smooth and cheap; error ~1e-8 in F
TO_PROPAGATION = PropagationOptions(method="magnus", max_phase_step=0.2)


class OptimizerError(RuntimeError):
    pass


class ObjectiveError(OptimizerError):
    """Objective evaluation failed; ``params`` holds the offending point."""

    def __init__(self, message: str, params: np.ndarray):
        super().__init__(f"{message} at params={np.array2string(np.asarray(params), precision=17)}")
        self.params = np.array(params, dtype=float)


class _BudgetExhausted(Exception):
    pass


@dataclass(frozen=True)
class OptProblem:
    objective: Callable[[np.ndarray], float]
    bounds: tuple[tuple[float, float], ...]
    names: tuple[str, ...] = ()
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not b:
            raise OptimizerError("at least one parameter is required")
        for lo, hi in b:
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                raise OptimizerError(f"bounds must be finite and ordered, got ({lo}, {hi})")
        object.__setattr__(self, "bounds", b)
        if self.names and len(self.names) != len(b):
            raise OptimizerError("names and bounds differ in length")

    @property
    def n(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return x.shape == (self.n,) and bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass
class RestartRecord:
    index: int
    stage: str  # "given", "random", "gaussian" or "local"
    start: list[float]
    x: list[float]
    value: float
    iterations: int
    n_evals: int
    message: str = ""


@dataclass
class OptResult:
    x: np.ndarray
    fun: float
    history: list[RestartRecord]
    n_evals: int
    budget_exhausted: bool = False
    restarts_exhausted: bool = True
    names: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "fun": float(self.fun),
            "names": list(self.names),
            "n_evals": int(self.n_evals),
            "budget_exhausted": bool(self.budget_exhausted),
            "restarts_exhausted": bool(self.restarts_exhausted),
            "history": [asdict(r) for r in self.history],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


class _Tracked:
    """Counts calls, remembers the best point and enforces an evaluation cap."""

    def __init__(self, problem: OptProblem, cap: int | None):
        self.problem = problem
        self.cap = cap
        self.n_evals = 0
        self.best_x: np.ndarray | None = None
        self.best_f = math.inf

    def __call__(self, x: np.ndarray) -> float:
        if self.cap is not None and self.n_evals >= self.cap:
            raise _BudgetExhausted
        x = np.clip(np.asarray(x, dtype=float), self.problem.lower, self.problem.upper)
        self.n_evals += 1
        try:
            f = float(self.problem.objective(x))
        except Exception as exc:
            raise ObjectiveError(f"objective raised {type(exc).__name__}: {exc}", x) from exc
        if not math.isfinite(f):
            raise ObjectiveError(f"objective returned non-finite value {f}", x)
        if f < self.best_f:
            self.best_f, self.best_x = f, x.copy()
        return f

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        x = np.asarray(x, dtype=float)
        f0 = self(x)
        g = np.empty_like(x)
        lo, hi = self.problem.lower, self.problem.upper
        for i in range(x.size):
            h = GRAD_STEP * max(1.0, abs(x[i]))
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            if xp[i] > hi[i]:
                g[i] = (f0 - self(xm)) / h
            elif xm[i] < lo[i]:
                g[i] = (self(xp) - f0) / h
            else:
                g[i] = (self(xp) - self(xm)) / (2 * h)
        return f0, g


def _refine(problem: OptProblem, x0: np.ndarray, cap: int | None) -> tuple[np.ndarray, float, int, int, str, bool]:
    tracked = _Tracked(problem, cap)
    nit, message, exhausted = 0, "", False
    try:
        res = minimize(
            tracked.value_and_grad,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=problem.bounds,
            options={"maxiter": MAX_ITER, "gtol": GTOL, "ftol": 1e-15, "maxls": 40},
        )
        nit, message = int(res.nit), str(res.message)
    except _BudgetExhausted:
        exhausted, message = True, "evaluation budget exhausted"
    if tracked.best_x is None:
        return x0.copy(), math.inf, nit, tracked.n_evals, message, exhausted
    return tracked.best_x, tracked.best_f, nit, tracked.n_evals, message, exhausted


def local_refine(problem: OptProblem, x0, max_evals: int | None = None) -> OptResult:
    """Bounded L-BFGS-B descent from ``x0`` with central-difference gradients.

    The returned point is the best one evaluated, so the value never exceeds
    the objective at ``x0`` unless the budget ran out before ``x0`` itself was
    evaluated.
    """
    x0 = np.asarray(x0, dtype=float)
    if not problem.contains(x0):
        raise OptimizerError(f"start {x0} lies outside the bounds {problem.bounds}")
    x, f, nit, nev, msg, exhausted = _refine(problem, x0, max_evals)
    rec = RestartRecord(0, "local", x0.tolist(), x.tolist(), f, nit, nev, msg)
    return OptResult(x, f, [rec], nev, budget_exhausted=exhausted, restarts_exhausted=not exhausted, names=problem.names)


def _restart_task(args):
    problem, index, stage, start = args
    x, f, nit, nev, msg, _ = _refine(problem, start, None)
    return RestartRecord(index, stage, start.tolist(), x.tolist(), f, nit, nev, msg)


def _best(history: Sequence[RestartRecord]) -> RestartRecord | None:
    best = None
    for rec in history:  # strict < keeps the lowest index on ties
        if best is None or rec.value < best.value:
            best = rec
    return best


def _write_checkpoint(path: Path, meta: dict, history: list[RestartRecord]) -> None:
    payload = {"meta": meta, "history": [asdict(r) for r in history]}
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True, indent=1))
    os.replace(tmp, path)


def _read_checkpoint(path: Path, meta: dict) -> list[RestartRecord]:
    payload = json.loads(path.read_text())
    if payload.get("meta") != meta:
        raise OptimizerError(f"checkpoint {path} was written for a different run: {payload.get('meta')}")
    return [RestartRecord(**r) for r in payload["history"]]


def multistart(
    problem: OptProblem,
    n_random: int = 32,
    n_gaussian: int = 16,
    sigma_rel: float = 0.1,
    seed: int = 0,
    extra_starts: Sequence[Sequence[float]] = (),
    max_evals: int | None = None,
    checkpoint: str | os.PathLike | None = None,
    workers: int = 1,
) -> OptResult:
    """Two-stage multistart around :func:`local_refine`.

    Stage one refines the ``extra_starts`` and then ``n_random`` uniform draws.
    Stage two refines ``n_gaussian`` draws from N(best, (sigma_rel * range)^2),
    clipped to the bounds, where ``best`` is the stage-one winner.  All random
    numbers are drawn up front from ``seed``, so a resumed run (``checkpoint``)
    and a parallel run (``workers > 1``) reproduce a serial run exactly.  With
    ``max_evals`` set the restarts run serially and stop once the cap is hit.
    """
    extra = [np.clip(np.asarray(s, dtype=float), problem.lower, problem.upper) for s in extra_starts]
    if n_random < 0 or n_gaussian < 0 or n_random + n_gaussian + len(extra) < 1:
        raise OptimizerError("need at least one restart")
    if not sigma_rel > 0:
        raise OptimizerError("sigma_rel must be positive")
    rng = np.random.default_rng(seed)
    span = problem.upper - problem.lower
    uniform = problem.lower + span * rng.random((n_random, problem.n))
    normal = rng.standard_normal((n_gaussian, problem.n))

    meta = {
        "seed": int(seed),
        "n_random": int(n_random),
        "n_gaussian": int(n_gaussian),
        "sigma_rel": float(sigma_rel),
        "bounds": [list(b) for b in problem.bounds],
        "extra_starts": [e.tolist() for e in extra],
        "max_evals": max_evals,
    }
    ckpt = Path(checkpoint) if checkpoint is not None else None
    history: list[RestartRecord] = []
    if ckpt is not None and ckpt.exists():
        history = _read_checkpoint(ckpt, meta)

    stage_one = [("given", s) for s in extra] + [("random", s) for s in uniform]
    total = len(stage_one) + n_gaussian
    used = sum(r.n_evals for r in history)
    budget_hit = False

    def run(tasks: list[tuple[int, str, np.ndarray]]):
        nonlocal used, budget_hit
        todo = [t for t in tasks if t[0] >= len(history)]
        if not todo or budget_hit:
            return
        if workers > 1 and max_evals is None:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for rec in pool.map(_restart_task, [(problem, i, st, x) for i, st, x in todo]):
                    history.append(rec)
                    used += rec.n_evals
                    if ckpt is not None:
                        _write_checkpoint(ckpt, meta, history)
            return
        for i, st, start in todo:
            cap = None if max_evals is None else max_evals - used
            if cap is not None and cap <= 0:
                budget_hit = True
                return
            x, f, nit, nev, msg, exhausted = _refine(problem, start, cap)
            history.append(RestartRecord(i, st, start.tolist(), x.tolist(), f, nit, nev, msg))
            used += nev
            if ckpt is not None:
                _write_checkpoint(ckpt, meta, history)
            if exhausted:
                budget_hit = True
                return

    run([(i, st, s) for i, (st, s) in enumerate(stage_one)])
    if n_gaussian and not budget_hit:
        centre = np.asarray(_best(history[: len(stage_one)]).x) if stage_one else 0.5 * (problem.lower + problem.upper)
        gauss = np.clip(centre + sigma_rel * span * normal, problem.lower, problem.upper)
        run([(len(stage_one) + k, "gaussian", g) for k, g in enumerate(gauss)])

    best = _best(history)
    if best is None or not math.isfinite(best.value):
        raise OptimizerError("evaluation budget exhausted before any objective value was obtained")
    return OptResult(
        x=np.asarray(best.x),
        fun=best.value,
        history=history,
        n_evals=sum(r.n_evals for r in history),
        budget_exhausted=budget_hit,
        restarts_exhausted=len(history) == total,
        names=problem.names,
    )


# -- protocol objectives -------------------------------------------------------

ARP_PARAM_NAMES = ("delta_r", "T")
# (Delta_r / Omega_max, T * Omega_max) for each of the identical pulses
ARP_BOUNDS = ((0.2, 4.0), (10.0, 120.0))

PROTOCOL_PARAMS = {"to": (TO_PARAM_NAMES, TO_BOUNDS), "arp": (ARP_PARAM_NAMES, ARP_BOUNDS)}


def build_schedule(protocol: str, omega: float, x, arp_pulses: int = 2) -> Schedule:
    """Schedule of a tunable protocol from its dimensionless parameter vector."""
    if not omega > 0:
        raise ScheduleError("Omega must be positive")
    if protocol == "to":
        d, A, w, phi = (float(v) for v in x)
        return to_schedule(omega, A, w, phi, d)
    if protocol == "arp":
        delta, T = (float(v) for v in x)
        return arp_schedule(omega, delta * omega, T / omega, n_pulses=arp_pulses)
    raise OptimizerError(f"no tunable parameters for protocol {protocol!r}")


@dataclass(frozen=True)
class GateObjective:
    """Gate infidelity of a tunable protocol under a fixed model.

    For the time-optimal ansatz x = (delta, A, omega, phi) with ``delta`` and
    ``omega`` in units of the Rabi frequency; for ARP x = (Delta_r, T) in
    units of Omega_max and 1/Omega_max.
    """

    model: ModelSpec
    omega: float
    protocol: str = "to"
    target: str = "cz"
    include_decay: bool = False
    opts: PropagationOptions = TO_PROPAGATION
    arp_pulses: int = 2

    def report(self, x) -> GateReport:
        sched = build_schedule(self.protocol, self.omega, x, self.arp_pulses)
        return evaluate_gate(self.model, sched, self.target, opts=self.opts)

    def __call__(self, x) -> float:
        rep = self.report(x)
        return 1.0 - (rep.F if self.include_decay else rep.F_coh)


def gate_problem(model: ModelSpec, omega: float, protocol: str = "to", target: str = "cz",
                 include_decay: bool = False, opts: PropagationOptions = TO_PROPAGATION,
                 arp_pulses: int = 2) -> OptProblem:
    if not omega > 0:
        raise ScheduleError("Omega must be positive")
    if protocol not in PROTOCOL_PARAMS:
        raise OptimizerError(f"no tunable parameters for protocol {protocol!r}")
    names, bounds = PROTOCOL_PARAMS[protocol]
    return OptProblem(
        objective=GateObjective(model, omega, protocol, target, include_decay, opts, arp_pulses),
        bounds=bounds,
        names=names,
        context={"model": model.to_dict(), "omega": omega, "protocol": protocol, "target": target,
                 "include_decay": include_decay},
    )


def to_problem(model: ModelSpec, omega: float, target: str = "cz", include_decay: bool = False,
               opts: PropagationOptions = TO_PROPAGATION) -> OptProblem:
    return gate_problem(model, omega, "to", target, include_decay, opts)


def _chain_product(U: np.ndarray) -> np.ndarray:
    """Ordered product U[-1] @ ... @ U[0] of a (n, 2, 2) stack by pairwise reduction."""
    while U.shape[0] > 1:
        if U.shape[0] % 2:
            U = np.concatenate([U, np.eye(2, dtype=U.dtype)[None]], axis=0)
        U = U[1::2] @ U[0::2]
    return U[0]


def _ground_amplitude(rabi: np.ndarray, phase: np.ndarray, detuning: np.ndarray, dt: float) -> complex:
    """<g|U|g> for H = (rabi/2)(e^{i phase}|g><r| + h.c.) - detuning |r><r|, piecewise constant."""
    m = -0.5 * detuning
    d = 0.5 * detuning  # (h_gg - h_rr) / 2
    off = 0.5 * rabi * np.exp(1j * phase)
    b = np.sqrt(d**2 + np.abs(off) ** 2)
    c = np.cos(b * dt)
    sinc = np.where(b > 0, np.sin(b * dt) / np.where(b > 0, b, 1.0), dt)
    steps = np.empty((rabi.size, 2, 2), dtype=complex)
    steps[:, 0, 0] = c - 1j * sinc * d
    steps[:, 1, 1] = c + 1j * sinc * d
    steps[:, 0, 1] = -1j * sinc * off
    steps[:, 1, 0] = -1j * sinc * np.conj(off)
    steps *= np.exp(-1j * m * dt)[:, None, None]
    return complex(_chain_product(steps)[0, 0])


def blockade_limit_infidelity(x, protocol: str = "to", n_steps: int = 1024, arp_pulses: int = 2) -> float:
    """Coherent CZ infidelity of a global protocol for an infinite interaction shift.

    |01> and |10> see a two-level drive at the bare Rabi frequency, |11> a
    two-level drive at sqrt(2) times it into the symmetric singly excited
    state.  Parameters as in :func:`build_schedule`, in units of Omega.
    """
    if protocol == "to":
        d, A, w, phi = (float(v) for v in x)
        T, repeats = TO_GATE_TIME, 1
        t = (np.arange(n_steps) + 0.5) * (T / n_steps)
        rabi = np.ones(n_steps)
        phase = A * np.cos(w * (t - T / 2) - phi) + d * t
        detuning = np.zeros(n_steps)
    elif protocol == "arp":
        delta, T = (float(v) for v in x)
        repeats = arp_pulses
        t = (np.arange(n_steps) + 0.5) * (T / n_steps)
        rabi = ARPEnvelope(1.0, T / 2, 0.175 * T)(t)
        phase = np.zeros(n_steps)
        detuning = CosineChirp(delta, T)(t)
    else:
        raise OptimizerError(f"no blockade-limit model for protocol {protocol!r}")
    dt = T / n_steps
    a1 = _ground_amplitude(rabi, phase, detuning, dt) ** repeats
    a2 = _ground_amplitude(math.sqrt(2.0) * rabi, phase, detuning, dt) ** repeats
    return 1.0 - gate_fidelity(np.diag([1.0, a1, a1, a2]), CZ)


@functools.lru_cache(maxsize=16)
def blockade_limit_start(protocol: str = "to", seed: int = 0, n_random: int = 32, arp_pulses: int = 2) -> tuple[float, ...]:
    """Best protocol parameters in the infinite-shift limit, used as a warm start."""
    names, bounds = PROTOCOL_PARAMS[protocol]
    # a coarse time grid is enough here: the result only seeds a full-model refinement
    n_steps = 256 if protocol == "to" else 1024
    f = functools.partial(blockade_limit_infidelity, protocol=protocol, n_steps=n_steps, arp_pulses=arp_pulses)
    return tuple(multistart(OptProblem(f, bounds, names), n_random=n_random, n_gaussian=0, seed=seed).x.tolist())


def optimize_to_gate(
    model: ModelSpec,
    omega: float,
    n_random: int = 32,
    n_gaussian: int = 16,
    sigma_rel: float = 0.1,
    seed: int = 0,
    extra_starts: Sequence[Sequence[float]] = (),
    include_decay: bool = False,
    max_evals: int | None = None,
    checkpoint: str | os.PathLike | None = None,
    workers: int = 1,
    opts: PropagationOptions = TO_PROPAGATION,
    warm_start: bool = True,
) -> OptResult:
    """Optimise (delta, A, omega, phi) of the time-optimal CZ at fixed T = 7.612 / Omega.

    With ``warm_start`` the infinite-shift optimum (see
    :func:`blockade_limit_start`) is refined first, ahead of ``extra_starts``
    and the random restarts.
    """
    problem = to_problem(model, omega, include_decay=include_decay, opts=opts)
    starts = ([blockade_limit_start("to", seed)] if warm_start else []) + [list(s) for s in extra_starts]
    return multistart(problem, n_random, n_gaussian, sigma_rel, seed, starts, max_evals, checkpoint, workers)


def cross_evaluate(
    params,
    opt_model: ModelSpec,
    eval_model: ModelSpec,
    omega: float,
    protocol: str = "to",
    opts: PropagationOptions = TO_PROPAGATION,
    arp_pulses: int = 2,
) -> GateReport:
    """Evaluate parameters found under ``opt_model`` on ``eval_model``."""
    rep = GateObjective(eval_model, omega, protocol, opts=opts, arp_pulses=arp_pulses).report(params)
    rep.model = opt_model.kind
    rep.eval_model = eval_model.kind
    return rep


def optimize_arp_gate(
    model: ModelSpec,
    omega: float,
    n_random: int = 8,
    n_gaussian: int = 4,
    sigma_rel: float = 0.1,
    seed: int = 0,
    extra_starts: Sequence[Sequence[float]] = (),
    include_decay: bool = False,
    max_evals: int | None = None,
    checkpoint: str | os.PathLike | None = None,
    workers: int = 1,
    opts: PropagationOptions = TO_PROPAGATION,
    arp_pulses: int = 2,
    warm_start: bool = True,
) -> OptResult:
    """Optimise (Delta_r, T) of the ARP gate, in units of Omega_max (see :func:`optimize_to_gate`)."""
    problem = gate_problem(model, omega, "arp", include_decay=include_decay, opts=opts, arp_pulses=arp_pulses)
    starts = ([blockade_limit_start("arp", seed, arp_pulses=arp_pulses)] if warm_start else [])
    starts += [list(s) for s in extra_starts]
    return multistart(problem, n_random, n_gaussian, sigma_rel, seed, starts, max_evals, checkpoint, workers)
