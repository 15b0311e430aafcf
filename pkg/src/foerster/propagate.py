"""Time-dependent Schroedinger propagation with Rydberg-population accounting.

Three integration paths share one entry point, :func:`propagate`:

* drive-free or constant segments are advanced exactly through the
  eigendecomposition of H, with the integrated Rydberg time computed in
  closed form;
* ``method="adaptive"`` integrates time-dependent segments with DOP853, the
  integrated Rydberg time riding along as extra components of the state;
* ``method="magnus"`` uses a fixed-step fourth-order commutator-free
  exponential integrator with batched diagonalisation and composite Simpson
  quadrature for T_R.  It is the fast path used inside optimisation loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .model import ModelSpec, rydberg_number_operator
from .pulses import DriveAssembler, Schedule

DECAY_MODES = ("off", "perturbative", "non_hermitian")
METHODS = ("adaptive", "magnus")

# commutator-free 4th order coefficients (two Gauss-Legendre nodes)
_GL_NODES = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)
_CF_A1 = 0.25 + math.sqrt(3) / 6
_CF_A2 = 0.25 - math.sqrt(3) / 6


class PropagationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PropagationOptions:
    rtol: float = 1e-10
    atol: float = 1e-12
    decay_mode: str = "perturbative"
    method: str = "adaptive"
    exact_static: bool = True
    # magnus path: largest ||H|| dt per step, and the minimum step count
    max_phase_step: float = 0.05
    min_steps: int = 64
    samples: int = 0
    block_reduce: bool = True

    def __post_init__(self):
        if self.decay_mode not in DECAY_MODES:
            raise ValueError(f"decay_mode must be one of {DECAY_MODES}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")


@dataclass
class Trajectory:
    final_states: np.ndarray  # (d, k), columns are the propagated inputs
    T_R: np.ndarray  # (k,) integrated Rydberg population, us
    norms: np.ndarray  # (k,) survival norm
    duration: float
    decay_mode: str
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    states: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0), dtype=complex))


def _static_segment(H, pi_diag, psi, dt, sample_t=None):
    """Exact evolution for constant Hermitian H; returns (psi, T_R, samples)."""
    E, U = np.linalg.eigh(H)
    c = U.conj().T @ psi
    Pi_e = U.conj().T @ (pi_diag[:, None] * U)
    w = E[:, None] - E[None, :]
    # integral of exp(i w t) over [0, dt]
    kern = dt * np.exp(0.5j * w * dt) * np.sinc(w * dt / (2 * np.pi))
    tr = np.real(np.einsum("jk,jk,jn,kn->n", Pi_e, kern, c.conj(), c))
    out = U @ (np.exp(-1j * E * dt)[:, None] * c)
    samples = None
    if sample_t is not None and len(sample_t):
        phases = np.exp(-1j * np.outer(sample_t, E))
        samples = np.einsum("ij,tj,jn->tin", U, phases, c)
    return out, tr, samples


def _adaptive_segment(asm, seg, pi_diag, gamma_half, psi, dt, opts, sample_t=None):
    d, k = psi.shape
    n = d * k

    def rhs(t, y):
        H = asm.hamiltonian(seg, t)
        if gamma_half:
            H = H - 1j * gamma_half * np.diag(pi_diag)
        P = y[:n].reshape(d, k)
        dP = -1j * (H @ P)
        dT = (pi_diag[:, None] * np.abs(P) ** 2).sum(axis=0)
        return np.concatenate([dP.ravel(), dT.astype(complex)])

    y0 = np.concatenate([psi.ravel(), np.zeros(k, dtype=complex)])
    sol = solve_ivp(
        rhs,
        (0.0, dt),
        y0,
        method="DOP853",
        rtol=opts.rtol,
        atol=opts.atol,
        dense_output=sample_t is not None and len(sample_t) > 0,
    )
    if not sol.success:
        raise PropagationError(f"integrator failed in segment {seg}: {sol.message}")
    yf = sol.y[:, -1]
    samples = None
    if sol.sol is not None:
        ys = sol.sol(np.asarray(sample_t)).T
        samples = ys[:, :n].reshape(-1, d, k)
    return yf[:n].reshape(d, k), yf[n:].real, samples


def _batched_expm_herm(H, dt):
    E, U = np.linalg.eigh(H)
    return (U * np.exp(-1j * dt * E)[:, None, :]) @ np.conj(np.swapaxes(U, 1, 2))


def _magnus_segment(asm, seg, pi_diag, psi, dt, opts, sample_t=None):
    norm = asm.norm_bound(seg)
    n = max(opts.min_steps, int(math.ceil(norm * dt / opts.max_phase_step)))
    n += n % 2
    h = dt / n
    starts = np.arange(n) * h
    H1 = asm.hamiltonians(seg, starts + _GL_NODES[0] * h)
    H2 = asm.hamiltonians(seg, starts + _GL_NODES[1] * h)
    U1 = _batched_expm_herm(_CF_A1 * H1 + _CF_A2 * H2, h)
    U2 = _batched_expm_herm(_CF_A2 * H1 + _CF_A1 * H2, h)
    steps = U2 @ U1
    states = np.empty((n + 1,) + psi.shape, dtype=complex)
    states[0] = psi
    for i in range(n):
        states[i + 1] = steps[i] @ states[i]
    pops = (pi_diag[None, :, None] * np.abs(states) ** 2).sum(axis=1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    tr = (h / 3.0) * (w[:, None] * pops).sum(axis=0)
    samples = None
    if sample_t is not None and len(sample_t):
        idx = np.clip(np.rint(np.asarray(sample_t) / h).astype(int), 0, n)
        samples = states[idx]
    return states[-1], tr, samples


def _connected_blocks(asm: DriveAssembler, psi: np.ndarray) -> list[np.ndarray]:
    """Index sets of the invariant blocks of H(t) that carry amplitude."""
    n_comp, labels = connected_components(csr_matrix(asm.coupling_pattern()), directed=False)
    occupied = np.any(np.abs(psi) > 0, axis=1)
    return [np.flatnonzero(labels == c) for c in range(n_comp) if np.any(occupied[labels == c])]


def _run_block(asm, schedule, pi_diag, psi, opts, gamma_half, t_all):
    bounds = schedule.boundaries
    T_R = np.zeros(psi.shape[1])
    sampled = []
    for i, seg in enumerate(schedule.segments):
        sample_t = None
        if t_all is not None:
            last = i == len(schedule.segments) - 1
            mask = (t_all >= bounds[i]) & ((t_all < bounds[i + 1]) | last)
            sample_t = t_all[mask] - bounds[i]
        if seg.static and opts.exact_static and not gamma_half:
            H = asm.hamiltonian(i, 0.0)
            psi, tr, samp = _static_segment(H, pi_diag, psi, seg.duration, sample_t)
        elif opts.method == "magnus" and not gamma_half:
            psi, tr, samp = _magnus_segment(asm, i, pi_diag, psi, seg.duration, opts, sample_t)
        else:
            psi, tr, samp = _adaptive_segment(asm, i, pi_diag, gamma_half, psi, seg.duration, opts, sample_t)
        T_R = T_R + tr
        if samp is not None:
            sampled.append(samp)
    states = np.concatenate(sampled, axis=0) if sampled else None
    return psi, T_R, states


def propagate(
    model: ModelSpec,
    schedule: Schedule,
    initial_states: np.ndarray,
    opts: PropagationOptions | None = None,
) -> Trajectory:
    """Propagate the columns of ``initial_states`` (shape (d,) or (d, k)) through ``schedule``.

    H(t) is split into the invariant blocks of its coupling graph and every
    occupied block is integrated on its own; the result is identical to a
    full-space propagation.
    """
    opts = opts or PropagationOptions()
    asm = DriveAssembler(model, schedule)
    psi = np.array(initial_states, dtype=complex)
    if psi.ndim == 1:
        psi = psi[:, None]
    d = model.scheme.dim
    if psi.shape[0] != d:
        raise PropagationError(f"initial states have dimension {psi.shape[0]}, model needs {d}")
    norms0 = np.linalg.norm(psi, axis=0)
    if np.any(np.abs(norms0 - 1.0) > 1e-9):
        raise PropagationError("initial states must be normalised")
    pi_diag = np.real(np.diag(rydberg_number_operator(model.scheme)))
    gamma_half = 0.5 * model.gamma if opts.decay_mode == "non_hermitian" else 0.0

    t_all = np.linspace(0.0, schedule.duration, opts.samples) if opts.samples else None
    final = np.zeros_like(psi)
    T_R = np.zeros(psi.shape[1])
    states = np.zeros((opts.samples, d, psi.shape[1]), dtype=complex) if opts.samples else None
    blocks = _connected_blocks(asm, psi) if opts.block_reduce else [np.arange(d)]
    if opts.method == "adaptive" and len(blocks) > 1:
        # one integrator call over the occupied subspace beats many small ones
        blocks = [np.sort(np.concatenate(blocks))]
    for idx in blocks:
        sub = asm if len(idx) == d else asm.restricted(idx)
        out, tr, samp = _run_block(sub, schedule, pi_diag[idx], psi[idx], opts, gamma_half, t_all)
        final[idx] = out
        T_R += tr
        if states is not None:
            states[:, idx, :] = samp
    traj = Trajectory(
        final_states=final,
        T_R=T_R,
        norms=np.linalg.norm(final, axis=0),
        duration=schedule.duration,
        decay_mode=opts.decay_mode,
    )
    if opts.samples:
        traj.times = t_all
        traj.states = states
    return traj


def rydberg_series(model: ModelSpec, traj: Trajectory) -> np.ndarray:
    """<Pi>(t) per input for a sampled trajectory, shape (n_samples, k)."""
    pi_diag = np.real(np.diag(rydberg_number_operator(model.scheme)))
    return (pi_diag[None, :, None] * np.abs(traj.states) ** 2).sum(axis=1)


DUMP_SAMPLES = 2000


def trajectory_table(model: ModelSpec, traj: Trajectory, column: int = 0) -> dict[str, np.ndarray]:
    """Columns t_us, P_r and pop_<A,B> for one propagated input of a sampled trajectory."""
    if traj.states.shape[0] == 0:
        raise PropagationError("trajectory was not sampled; set PropagationOptions.samples")
    table = {"t_us": traj.times, "P_r": rydberg_series(model, traj)[:, column]}
    pops = np.abs(traj.states[:, :, column]) ** 2
    for i, label in enumerate(model.scheme.labels()):
        table[f"pop_{label.replace(',', '_')}"] = pops[:, i]
    return table


def computational_inputs(model: ModelSpec) -> np.ndarray:
    """Columns |00>, |01>, |10>, |11> in the model's pair basis."""
    s = model.scheme
    out = np.zeros((s.dim, 4), dtype=complex)
    for col, idx in enumerate(s.computational_indices):
        out[idx, col] = 1.0
    return out


def unitary_propagator(H: np.ndarray, t: float) -> np.ndarray:
    return expm(-1j * H * t)


# -- analytic references --------------------------------------------------------


def analytic_blockade_population(omega, V, t):
    """Single-atom Rydberg population under drive detuned by the blockade shift V."""
    gen = omega**2 + V**2
    if np.all(np.asarray(gen) == 0):
        return np.zeros_like(np.asarray(t, dtype=float))
    return omega**2 / gen * np.sin(np.sqrt(gen) * np.asarray(t, dtype=float) / 2) ** 2


def analytic_a1_amplitude(omega: float, V: float, t):
    """<a1|psi(t)> for the three-level {a1, ab, alpha beta} 2pi-pulse model."""
    if V == 0:
        raise ValueError("V must be non-zero")
    eps = omega / (2 * V)
    lam = math.sqrt(V**2 + omega**2 / 4)
    val = (1 + eps**2 * np.cos(lam * np.asarray(t, dtype=float))) / (1 + eps**2)
    return val + 0j


def stark_phase_one_eigenstate(omega: float, V: float) -> float:
    """Second-order AC Stark phase on |a1> accumulated over a 2pi pulse."""
    if V == 0:
        raise ValueError("V must be non-zero")
    return math.pi * omega / (2 * V)


def h_2pi_one(omega: float, V: float) -> np.ndarray:
    """2pi-pulse Hamiltonian in {|a1>, |ab>} for the one-eigenstate model."""
    return np.array([[0, omega / 2], [omega / 2, V]], dtype=complex)


def h_2pi_two(omega: float, V: float) -> np.ndarray:
    """2pi-pulse Hamiltonian in {|a1>, |ab>, |alpha beta>} for the two-eigenstate model."""
    return np.array([[0, omega / 2, 0], [omega / 2, 0, V], [0, V, 0]], dtype=complex)
