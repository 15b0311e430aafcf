"""Gate fidelity, decay error and the eta figure of merit."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import ModelSpec
from .propagate import PropagationOptions, computational_inputs, propagate
from .pulses import Schedule

ETA_RANK_ONE = 1.0 + math.pi / 2
ETA_RANK_TWO = math.pi / 2

CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
SQRT_ISWAP_DAG = np.array(
    [
        [1, 0, 0, 0],
        [0, 1 / math.sqrt(2), -1j / math.sqrt(2), 0],
        [0, -1j / math.sqrt(2), 1 / math.sqrt(2), 0],
        [0, 0, 0, 1],
    ],
    dtype=complex,
)
TARGETS = {"cz": CZ, "sqrt_iswap_dag": SQRT_ISWAP_DAG}

# phase exponents (theta_1 on A, theta_2 on B) for |00>, |01>, |10>, |11>
_Z_EXPONENTS = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)


@dataclass
class GateReport:
    F_coh: float
    T_R: float  # mean over the four computational inputs, us
    eps_decay: float
    F: float
    eta: float
    theta_1: float
    theta_2: float
    global_phase: float
    model: str = ""
    eval_model: str = ""

    def as_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        return (
            f"F_coh = {self.F_coh:.9f}  F = {self.F:.9f}  eta = {self.eta:.6f}\n"
            f"T_R = {self.T_R:.6g} us  eps_decay = {self.eps_decay:.3e}\n"
            f"local phases: theta_1 = {self.theta_1:.6f}, theta_2 = {self.theta_2:.6f}, "
            f"global = {self.global_phase:.6f}"
        )


def _overlap(w: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """|sum_k w_k exp(i n_k . theta)| for theta of shape (..., 2)."""
    ph = np.exp(1j * (theta @ _Z_EXPONENTS.T))
    return np.abs(ph @ w)


def _newton_phases(w: np.ndarray, theta: np.ndarray, max_iter: int = 50) -> np.ndarray:
    """Damped Newton ascent of |sum_k w_k exp(i n_k . theta)|^2 from a grid point."""
    n = _Z_EXPONENTS

    def parts(th):
        terms = w * np.exp(1j * (n @ th))
        S = terms.sum()
        dS = 1j * (n.T @ terms)
        d2S = -(n.T * terms) @ n
        grad = 2 * np.real(np.conj(S) * dS)
        hess = 2 * np.real(np.outer(np.conj(dS), dS) + np.conj(S) * d2S)
        return abs(S) ** 2, grad, hess

    val, grad, hess = parts(theta)
    for _ in range(max_iter):
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad
        if step @ grad <= 0:  # not an ascent direction
            step = grad
        lam = 1.0
        while lam > 1e-12:
            cand = theta + lam * step
            cval, cgrad, chess = parts(cand)
            if cval >= val:
                break
            lam *= 0.5
        else:
            break
        moved = float(np.max(np.abs(cand - theta)))
        theta, val, grad, hess = cand, cval, cgrad, chess
        if moved < 1e-12 or np.max(np.abs(grad)) < 1e-15:
            break
    return np.mod(theta + np.pi, 2 * np.pi) - np.pi


def gate_fidelity(M: np.ndarray, U: np.ndarray, local_phase_freedom: bool = True, return_phases: bool = False):
    """Average gate fidelity of a (possibly trace-decreasing) 4x4 block M against U.

    F = [Tr(M~ M~^dag) + |Tr M~|^2] / 20 with M~ = U^dag K M, K a global phase
    times single-qubit Z rotations, maximised over K when
    ``local_phase_freedom`` is set.
    """
    M = np.asarray(M, dtype=complex)
    U = np.asarray(U, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"achieved map must be square, got shape {M.shape}")
    if M.shape != (4, 4) or U.shape != (4, 4):
        raise ValueError("gate fidelity is defined on the 4-dimensional qubit subspace")
    # Tr(U^dag K M) = sum_k K_k (M U^dag)_kk
    w = np.diag(M @ U.conj().T)
    norm_term = float(np.real(np.trace(M @ M.conj().T)))
    theta = np.zeros(2)
    if local_phase_freedom and np.any(np.abs(w) > 0):
        grid = np.linspace(-np.pi, np.pi, 33, endpoint=False)
        g1, g2 = np.meshgrid(grid, grid, indexing="ij")
        cand = np.stack([g1.ravel(), g2.ravel()], axis=1)
        theta = _newton_phases(w, cand[int(np.argmax(_overlap(w, cand)))])
    tr = complex(np.exp(1j * (_Z_EXPONENTS @ theta)) @ w)
    F = (norm_term + abs(tr) ** 2) / 20.0
    if return_phases:
        return F, (float(theta[0]), float(theta[1]), float(-np.angle(tr)) if tr != 0 else 0.0)
    return F


def fidelity_upper_bound(V: float, tau_r: float, rank: int) -> float:
    """1 - eta_min / (V tau_R) with eta_min = pi/2 (rank two) or 1 + pi/2 (rank one)."""
    if V <= 0 or tau_r <= 0:
        raise ValueError("V and tau_R must be positive")
    if rank not in (1, 2):
        raise ValueError("rank must be 1 or 2")
    eta = ETA_RANK_TWO if rank == 2 else ETA_RANK_ONE
    return 1.0 - eta / (V * tau_r)


def qubit_block(model: ModelSpec, final_states: np.ndarray) -> np.ndarray:
    """4x4 block <i|U|j> on the computational subspace from propagated inputs."""
    return final_states[model.scheme.computational_indices, :]


def evaluate_gate(
    model: ModelSpec,
    schedule: Schedule,
    target: str | np.ndarray = "cz",
    local_phase_freedom: bool = True,
    opts: PropagationOptions | None = None,
    eval_label: str | None = None,
) -> GateReport:
    """Propagate the computational inputs and assemble a :class:`GateReport`."""
    U = TARGETS[target] if isinstance(target, str) else np.asarray(target)
    traj = propagate(model, schedule, computational_inputs(model), opts)
    M = qubit_block(model, traj.final_states)
    F_coh, (t1, t2, g) = gate_fidelity(M, U, local_phase_freedom, return_phases=True)
    F_coh = min(max(F_coh, 0.0), 1.0)
    T_R = float(np.mean(traj.T_R))
    eps = model.gamma * T_R
    return GateReport(
        F_coh=F_coh,
        T_R=T_R,
        eps_decay=eps,
        F=F_coh * max(0.0, 1.0 - eps),
        eta=model.interaction_strength * T_R,
        theta_1=t1,
        theta_2=t2,
        global_phase=g,
        model=model.kind,
        eval_model=eval_label or model.kind,
    )


def eta_of_gate(model: ModelSpec, schedule: Schedule, opts: PropagationOptions | None = None) -> float:
    """V * T_R with T_R averaged over the four computational inputs."""
    traj = propagate(model, schedule, computational_inputs(model), opts)
    return model.interaction_strength * float(np.mean(traj.T_R))
