"""Schmidt data, min-entropy rates and the rank-two T_R lower bound.

The bound machinery works on two-atom pure states written as amplitude
matrices ``psi[j, k]`` over local bases.  The default local space for the
bound is the three-level reduction {g, a, alpha} (x) {g, b, beta}: both qubit
levels act identically under the exchange Hamiltonian and the Rydberg
counter, so they merge into one ``g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.optimize import minimize

LN2 = math.log(2.0)
DEGENERACY_GAP = 1e-9

# local order for the reduced bound space: (g, r, r') = (g, a, alpha) / (g, b, beta)
REDUCED_DIMS = (3, 3)


class DegenerateSchmidtError(ValueError):
    pass


@dataclass
class SchmidtData:
    coefficients: np.ndarray  # descending, sum of squares = 1
    u: np.ndarray  # (r, dA) local vectors on A
    v: np.ndarray  # (r, dB) local vectors on B

    @property
    def x(self) -> float:
        return float(self.coefficients[0] ** 2)

    @property
    def s_min(self) -> float:
        return float(-math.log2(self.x))

    def reconstruct(self) -> np.ndarray:
        return np.einsum("i,ij,ik->jk", self.coefficients, self.u, self.v).ravel()


def schmidt(psi: np.ndarray, dims: tuple[int, int]) -> SchmidtData:
    """Schmidt decomposition of a normalised pure state via SVD."""
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.size != dims[0] * dims[1]:
        raise ValueError(f"state of size {psi.size} does not match dims {dims}")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-9:
        raise ValueError("state must be normalised")
    U, c, Vh = np.linalg.svd(psi.reshape(dims), full_matrices=False)
    return SchmidtData(c, U.T.copy(), Vh.copy())


def exchange_hamiltonian(V: float, dims: tuple[int, int] = REDUCED_DIMS) -> np.ndarray:
    """V (|ab><alpha beta| + h.c.) on local levels (g.., a, alpha) x (g.., b, beta)."""
    dA, dB = dims
    H = np.zeros((dA * dB, dA * dB), dtype=complex)
    ab = (dA - 2) * dB + (dB - 2)
    xy = (dA - 1) * dB + (dB - 1)
    H[ab, xy] = H[xy, ab] = V
    return H


def rydberg_counter(dims: tuple[int, int] = REDUCED_DIMS) -> np.ndarray:
    """Diagonal of Q_A + Q_B when the last two local levels are Rydberg levels."""
    dA, dB = dims
    qa = np.r_[np.zeros(dA - 2), np.ones(2)]
    qb = np.r_[np.zeros(dB - 2), np.ones(2)]
    return np.add.outer(qa, qb).ravel()


def s_min_rate(psi: np.ndarray, H: np.ndarray, dims: tuple[int, int] = REDUCED_DIMS) -> float:
    """dS_min/dt = -(2/ln 2)(1/c1) sum_{i>1} c_i Im <u1 v1|H|u_i v_i>."""
    sd = schmidt(psi, dims)
    c = sd.coefficients
    if len(c) > 1 and c[0] - c[1] <= DEGENERACY_GAP:
        raise DegenerateSchmidtError("largest Schmidt coefficient is degenerate")
    first = np.kron(sd.u[0], sd.v[0])
    acc = 0.0
    for i in range(1, len(c)):
        if c[i] == 0:
            continue
        acc += c[i] * np.imag(first.conj() @ H @ np.kron(sd.u[i], sd.v[i]))
    return float(-2.0 / LN2 / c[0] * acc)


def g_full(s, V: float):
    """Minimal Rydberg population per unit entropy rate at min-entropy s."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("g_full diverges at s <= 0")
    out = (LN2 / V) / np.sqrt(2.0**s - 1.0)
    return float(out) if out.ndim == 0 else out


def eta_full(V: float = 1.0) -> float:
    """V * integral_0^1 g_full(s) ds by adaptive quadrature.

    With u = 2**s the integrand becomes 1 / (u sqrt(u - 1)) on [1, 2], whose
    inverse-square-root endpoint singularity is handled by an algebraic weight.
    """
    val, _ = integrate.quad(
        lambda u: 1.0 / (V * u), 1.0, 2.0, weight="alg", wvar=(-0.5, 0.0), epsabs=1e-14, epsrel=1e-13
    )
    return V * val


def saturating_state(s: float, V: float = 1.0, dims: tuple[int, int] = REDUCED_DIMS) -> np.ndarray:
    """sqrt(x)|ab> + i sgn(V) sqrt(1 - x)|alpha beta> with x = 2**-s."""
    if not 0 < s <= 1:
        raise ValueError("s must lie in (0, 1]")
    x = 2.0**-s
    dA, dB = dims
    psi = np.zeros(dA * dB, dtype=complex)
    psi[(dA - 2) * dB + (dB - 2)] = math.sqrt(x)
    psi[(dA - 1) * dB + (dB - 1)] = 1j * np.sign(V) * math.sqrt(1.0 - x)
    return psi


# -- Monte-Carlo certification ----------------------------------------------------


def haar_states(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _batch_ratios(states: np.ndarray, V: float, dims: tuple[int, int]):
    """Vectorised P, |Sdot|, x and Schmidt gap for a batch of states."""
    dA, dB = dims
    mats = states.reshape(-1, dA, dB)
    U, c, Vh = np.linalg.svd(mats)
    pi_diag = rydberg_counter(dims)
    P = (np.abs(states) ** 2) @ pi_diag
    H = exchange_hamiltonian(V, dims)
    # |u_i v_i> product vectors, shape (n, r, d)
    prods = np.einsum("nji,nik->nijk", U, Vh).reshape(len(states), -1, dA * dB)
    first = prods[:, 0, :]
    Hfirst = first.conj() @ H  # <u1 v1| H as a row vector
    elems = np.einsum("nd,nid->ni", Hfirst, prods)
    acc = np.sum(c[:, 1:] * np.imag(elems[:, 1:]), axis=1)
    rate = -2.0 / LN2 / c[:, 0] * acc
    gap = c[:, 0] - c[:, 1]
    return P, np.abs(rate), c[:, 0] ** 2, gap


@dataclass
class CertificationReport:
    seed: int
    n_samples: int
    n_checked: int
    n_skipped_degenerate: int
    n_skipped_zero_rate: int
    violations: int
    min_margin: float  # min over checked samples of ratio / bound - 1
    saturating_margin: float
    dims: tuple[int, int]

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_samples": self.n_samples,
            "n_checked": self.n_checked,
            "n_skipped_degenerate": self.n_skipped_degenerate,
            "n_skipped_zero_rate": self.n_skipped_zero_rate,
            "violations": self.violations,
            "min_margin": self.min_margin,
            "saturating_margin": self.saturating_margin,
            "dims": f"{self.dims[0]}x{self.dims[1]}",
        }


def certify_pointwise_bound(
    V: float,
    n_samples: int,
    seed: int,
    dims: tuple[int, int] = REDUCED_DIMS,
    rtol: float = 1e-9,
    batch: int = 20000,
    extra_states: np.ndarray | None = None,
) -> CertificationReport:
    """Check P/|Sdot_min| >= (ln2/V) sqrt(x/(1-x)) on Haar-random states.

    Samples with a degenerate leading Schmidt coefficient or a vanishing
    entropy rate are skipped and counted.  The saturating family
    psi_s, s in {0.1, ..., 0.9}, is checked separately and its tightest
    margin reported.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    d = dims[0] * dims[1]
    checked = deg = zero = viol = 0
    min_margin = math.inf
    done = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        states = haar_states(m, d, rng)
        if extra_states is not None and done == 0:
            states = np.vstack([np.asarray(extra_states, dtype=complex).reshape(-1, d), states])
        P, rate, x, gap = _batch_ratios(states, V, dims)
        degenerate = gap <= DEGENERACY_GAP
        zero_rate = ~degenerate & (rate <= 1e-300)
        ok = ~degenerate & ~zero_rate
        bound = (LN2 / abs(V)) * np.sqrt(x[ok] / (1.0 - x[ok]))
        margin = P[ok] / rate[ok] / bound - 1.0
        viol += int(np.sum(margin < -rtol))
        if margin.size:
            min_margin = min(min_margin, float(margin.min()))
        checked += int(ok.sum())
        deg += int(degenerate.sum())
        zero += int(zero_rate.sum())
        done += m
    sat = np.array([saturating_state(s, V, dims) for s in np.arange(1, 10) / 10.0])
    P, rate, x, _ = _batch_ratios(sat, V, dims)
    sat_margin = float(np.max(np.abs(P / rate / ((LN2 / abs(V)) * np.sqrt(x / (1 - x))) - 1.0)))
    return CertificationReport(seed, n_samples, checked, deg, zero, viol, min_margin, sat_margin, dims)


def embed_reduced(psi3: np.ndarray) -> np.ndarray:
    """Map a 3x3 reduced state into the 4x4 pair basis (g -> g1)."""
    out = np.zeros((4, 4), dtype=complex)
    m = np.asarray(psi3).reshape(3, 3)
    out[1:, 1:] = m
    return out.ravel()


# -- numerical minimisation of P/|Sdot| at fixed min-entropy ---------------------------


def _unit(z: np.ndarray) -> np.ndarray:
    return z / np.linalg.norm(z)


def _complement(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows) of the orthogonal complement of unit vector u."""
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(len(u), dtype=complex)]))
    return q[:, 1:].T


def _state_from_params(p: np.ndarray, x: float, dims: tuple[int, int]) -> np.ndarray:
    dA, dB = dims
    k = 0

    def take(n):
        nonlocal k
        out = p[k : k + n] + 1j * p[k + n : k + 2 * n]
        k += 2 * n
        return out

    u = _unit(take(dA))
    v = _unit(take(dB))
    core = take((dA - 1) * (dB - 1)).reshape(dA - 1, dB - 1)
    core = core / np.linalg.norm(core)
    n_vec = np.einsum("jk,ja,kb->ab", core, _complement(u), _complement(v)).ravel()
    return math.sqrt(x) * np.kron(u, v) + math.sqrt(1.0 - x) * n_vec


def _n_params(dims):
    dA, dB = dims
    return 2 * (dA + dB + (dA - 1) * (dB - 1))


def ratio_at_fixed_entropy(p, x, V, dims=REDUCED_DIMS) -> float:
    """P(psi)/|Sdot_min(psi)| for psi = sqrt(x)|uv> + sqrt(1-x)|n>, n in u-perp (x) v-perp."""
    psi = _state_from_params(p, x, dims)
    P = float(np.real(np.abs(psi) ** 2 @ rydberg_counter(dims)))
    rate = abs(s_min_rate(psi, exchange_hamiltonian(V, dims), dims))
    if rate < 1e-14:
        return 1e6 / abs(V)
    return P / rate


def numeric_G_oracle(
    s: float, V: float = 1.0, n_starts: int = 24, seed: int = 0, dims: tuple[int, int] = REDUCED_DIMS
) -> float:
    """Multistart minimisation of P/|Sdot_min| over states with S_min = s."""
    if not 0.05 < s < 0.95:
        raise ValueError("oracle is restricted to s in (0.05, 0.95)")
    x = 2.0**-s
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(n_starts):
        p0 = rng.standard_normal(_n_params(dims))
        try:
            res = minimize(ratio_at_fixed_entropy, p0, args=(x, V, dims), method="BFGS", options={"gtol": 1e-10})
        except DegenerateSchmidtError:
            continue
        if np.isfinite(res.fun):
            best = min(best, float(res.fun))
    if not math.isfinite(best):
        raise RuntimeError("all starts of the G oracle failed")
    return best
