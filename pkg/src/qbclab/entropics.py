"""Entropic functionals in bits.

Von Neumann entropy, (conditional) mutual information, the Holevo quantity,
Petz-Renyi divergences and their channel version ``chi_alpha``, plus the
continuity bounds used to gate security and net-approximation slack.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from qbclab.errors import DimensionError, DomainError, ValidationError
from qbclab.linalg import dagger, mpow, partial_trace, spectral

EIG_FLOOR = 1e-12
WEIGHT_TOL = 1e-12


def binary_entropy(x: float) -> float:
    """``h(x) = -x log x - (1-x) log(1-x)`` with ``h(0) = h(1) = 0``."""
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return float(-x * np.log2(x) - (1 - x) * np.log2(1 - x))


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > EIG_FLOOR]
    return float(-np.sum(p * np.log2(p)))


def _spectrum(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    w = np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))
    return w


def entropy(rho) -> float:
    """Von Neumann entropy ``-tr(rho log2 rho)``; eigenvalues below 1e-12 count as zero."""
    w = _spectrum(rho)
    w = w[w > EIG_FLOOR]
    s = float(-np.sum(w * np.log2(w)))
    return max(s, 0.0)


def mutual_information(rho_ab, dims: Sequence[int]) -> float:
    dA, dB = dims
    rho_ab = np.asarray(rho_ab, dtype=complex)
    if rho_ab.shape != (dA * dB, dA * dB):
        raise DimensionError(f"state of shape {rho_ab.shape} does not factor as {dA}x{dB}")
    return (entropy(partial_trace(rho_ab, 0, dims)) + entropy(partial_trace(rho_ab, 1, dims))
            - entropy(rho_ab))


@dataclass(frozen=True)
class Ensemble:
    """Weighted family of states ``{p(x), rho_x}``."""

    weights: np.ndarray
    states: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"ensemble weights must be a probability vector (sum={w.sum():.15g})")
        if len(self.states) != len(w):
            raise DimensionError("one state per weight is required")
        states = tuple(np.asarray(s, dtype=complex) for s in self.states)
        shapes = {s.shape for s in states}
        if len(shapes) != 1:
            raise DimensionError(f"ensemble states have mixed shapes {shapes}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "states", states)

    def average(self) -> np.ndarray:
        return np.einsum("x,xij->ij", self.weights, np.array(self.states))


def conditional_mutual_information(ensemble: Ensemble, dims: Sequence[int]) -> float:
    """``I(A;B|X) = sum_x p(x) I(A;B)_{rho_x}`` for a classical conditioning register."""
    total = 0.0
    for w, s in zip(ensemble.weights, ensemble.states):
        if w > 0:
            total += w * mutual_information(s, dims)
    return total


def holevo(p, outputs) -> float:
    """Holevo quantity ``S(sum p W) - sum p S(W)`` of a cq ensemble.

    ``outputs`` is a sequence (or a ``(k, d, d)`` array) of output states; a
    ``CqChannel`` is accepted as well.
    """
    outs = _outputs(outputs)
    p = np.asarray(p, dtype=float)
    if len(p) != len(outs):
        raise DimensionError(f"{len(p)} weights for {len(outs)} outputs")
    avg = np.einsum("y,yij->ij", p, outs)
    val = entropy(avg) - sum(py * entropy(o) for py, o in zip(p, outs) if py > 0)
    return max(val, 0.0)


def _outputs(w) -> np.ndarray:
    if hasattr(w, "outputs"):
        return np.asarray(w.outputs, dtype=complex)
    return np.asarray(w, dtype=complex)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def renyi_divergence(rho, sigma, alpha: float) -> tuple[float, float]:
    """Petz-Renyi quantities ``(Q_alpha, D_alpha)`` for ``alpha in (0, 1)``.

    ``Q = tr(rho^a sigma^(1-a))`` and ``D = log2(Q / tr rho) / (a - 1)``; powers act
    on the supports, so ``Q`` is finite for any pair of PSD operators.
    """
    _check_alpha(alpha)
    q = float(np.real(np.trace(mpow(rho, alpha) @ mpow(sigma, 1 - alpha))))
    tr = float(np.real(np.trace(rho)))
    if q <= 0:
        return q, float("inf")
    return q, float(np.log2(q / tr) / (alpha - 1))


def relative_entropy(rho, sigma) -> float:
    """Umegaki relative entropy in bits (``inf`` when the support condition fails)."""
    wr, vr = spectral(rho)
    ws, vs = spectral(sigma)
    wr = np.clip(wr, 0, None)
    ws = np.clip(ws, 0, None)
    # tr rho log rho - tr rho log sigma via the overlap matrix of eigenbases.
    overlap = np.abs(dagger(vr) @ vs) ** 2
    pos_r = wr > EIG_FLOOR
    pos_s = ws > EIG_FLOOR
    if np.any(overlap[np.ix_(pos_r, ~pos_s)] * wr[pos_r, None] > EIG_FLOOR):
        return float("inf")
    a = float(np.sum(wr[pos_r] * np.log2(wr[pos_r])))
    logs = np.zeros_like(ws)
    logs[pos_s] = np.log2(ws[pos_s])
    b = float(np.sum(wr[pos_r, None] * overlap[pos_r] * logs[None, :]))
    return a - b


def chi_alpha(p, w, alpha: float) -> float:
    """Renyi-Holevo quantity ``inf_sigma D_alpha(W(p) || p_hat ⊗ sigma)``.

    Uses the closed-form minimizer ``sigma* ∝ (sum_y p(y) W(y)^alpha)^(1/alpha)``, which
    gives ``chi_alpha = alpha/(alpha-1) * log2 tr (sum_y p(y) W(y)^alpha)^(1/alpha)``.
    """
    _check_alpha(alpha)
    outs = _outputs(w)
    p = np.asarray(p, dtype=float)
    a = sum(py * mpow(o, alpha) for py, o in zip(p, outs) if py > 0)
    t = float(np.real(np.trace(mpow(a, 1.0 / alpha))))
    return max(float(alpha / (alpha - 1) * np.log2(t)), 0.0)


def chi_alpha_objective(p, w, alpha: float, sigma) -> float:
    """``D_alpha(W(p) || p_hat ⊗ sigma)`` evaluated for a given output state ``sigma``."""
    _check_alpha(alpha)
    outs = _outputs(w)
    p = np.asarray(p, dtype=float)
    s_pow = mpow(sigma, 1 - alpha)
    q = sum(py * float(np.real(np.trace(mpow(o, alpha) @ s_pow)))
            for py, o in zip(p, outs) if py > 0)
    return float(np.log2(q) / (alpha - 1))


def chi_alpha_direct(p, w, alpha: float, restarts: int = 4, seed: int = 0) -> float:
    """Numerical minimization of ``chi_alpha_objective`` over full-rank ``sigma``.

    ``sigma = G G^† / tr(G G^†)`` with ``G`` lower triangular, optimized by BFGS
    from several starting points. Independent of the closed form in ``chi_alpha``.
    """
    outs = _outputs(w)
    d = outs.shape[1]
    rng = np.random.default_rng(seed)
    tri = np.tril_indices(d)

    def unpack(theta):
        k = len(tri[0])
        g = np.zeros((d, d), dtype=complex)
        g[tri] = theta[:k] + 1j * theta[k:]
        s = g @ dagger(g)
        return s / np.real(np.trace(s))

    def f(theta):
        s = unpack(theta)
        return chi_alpha_objective(p, outs, alpha, s + 1e-15 * np.eye(d))

    best = float("inf")
    k = len(tri[0])
    for r in range(restarts):
        if r == 0:
            x0 = np.concatenate([np.eye(d)[tri], np.zeros(k)])
        else:
            x0 = rng.normal(size=2 * k)
        res = minimize(f, x0, method="BFGS", options={"gtol": 1e-10, "maxiter": 2000})
        best = min(best, float(res.fun))
    return best


def entropy_continuity(delta: float, d: int) -> float:
    """Fannes-type bound on ``|S(rho) - S(sigma)|`` given ``delta = ||rho - sigma||_1``.

    Evaluated at the trace distance ``T = delta / 2``: ``T log2(d-1) + h(T)``.
    """
    t = min(max(delta, 0.0) / 2.0, 1.0)
    return float(t * np.log2(d - 1) + binary_entropy(t)) if d > 1 else 0.0


def cmi_continuity(delta: float, d: int) -> float:
    """Bound on ``|I(A;B|C)_rho - I(A;B|C)_sigma|`` for ``delta = ||rho - sigma||_1``, ``d = dim B``."""
    delta = max(delta, 0.0)
    return float(2 * (delta * np.log2(d) + (1 + delta) * binary_entropy(delta / (1 + delta))))


def continuity_bounds(delta: float, d: int, kind: str = "entropy") -> float:
    """Dispatch to :func:`entropy_continuity` (``kind="entropy"``) or :func:`cmi_continuity`."""
    if not 0.0 <= delta <= 2.0 + 1e-12:
        raise DomainError(f"delta must lie in [0, 2], got {delta}")
    if d < 2:
        raise DomainError(f"dimension must be at least 2, got {d}")
    if kind == "entropy":
        return entropy_continuity(delta, d)
    if kind == "cmi":
        return cmi_continuity(delta, d)
    raise ValueError(f"unknown bound kind {kind!r}")


def gentle_operator_bound(deficit: float) -> float:
    """``sqrt(2 eps)`` bound on ``||rho - sqrt(T) rho sqrt(T)||_1`` when ``1 - tr(rho T) <= eps``."""
    return float(np.sqrt(2 * max(deficit, 0.0)))


def gentle_measurement_bound(deficit: float) -> float:
    """``2 sqrt(eps)``, valid for every subnormalized ``rho`` and ``0 <= T <= 1``.

    The smaller ``sqrt(2 eps)`` of :func:`gentle_operator_bound` can fail for pure
    states: with ``rho = |psi><psi|`` and ``T`` a rank-one projector the left side
    is ``sqrt(4 eps - 3 eps^2)``.
    """
    return float(2 * np.sqrt(max(deficit, 0.0)))
