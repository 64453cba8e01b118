"""Dense linear algebra on small Hilbert spaces.

Operators are plain complex ``numpy`` arrays of shape ``(d, d)``. Density
operators and POVMs are validated on entry to the functions that need the
invariant and are otherwise passed around as arrays.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from qbclab.errors import CapacityError, DimensionError, ValidationError

DEFAULT_DIM_CAP = 4096

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-10
TRACE_TOL = 1e-10
POVM_ELEMENT_TOL = 1e-9
POVM_SUM_TOL = 1e-8
SPECTRAL_HERMITIAN_TOL = 1e-8
CLIP_TOL = 1e-8
SUPPORT_TOL = 1e-14
TIE_TOL = 1e-12


def dim_cap() -> int:
    """Composite-dimension cap, overridable through ``QBCLAB_DIM_CAP``."""
    raw = os.environ.get("QBCLAB_DIM_CAP")
    if raw is None or raw.strip() == "":
        return DEFAULT_DIM_CAP
    return int(raw)


def check_dim(d: int, cap: int | None = None) -> int:
    cap = dim_cap() if cap is None else cap
    if d > cap:
        raise CapacityError(f"composite dimension {d} exceeds cap {cap}")
    return d


def as_operator(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionError(f"expected a square operator, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("operator has non-finite entries")
    return a


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(a - dagger(a)), initial=0.0) <= tol)


def validate_state(rho, tol: float = TRACE_TOL, name: str = "state") -> np.ndarray:
    """Return ``rho`` as an array after checking the density-operator invariants."""
    rho = as_operator(rho)
    if not is_hermitian(rho, HERMITIAN_TOL):
        raise ValidationError(f"{name}: hermiticity invariant violated")
    tr = float(np.real(np.trace(rho)))
    if abs(tr - 1.0) > tol:
        raise ValidationError(f"{name}: trace invariant violated (trace={tr:.12g})")
    lam_min = float(np.linalg.eigvalsh(rho)[0])
    if lam_min < -PSD_TOL:
        raise ValidationError(f"{name}: positivity invariant violated (min eigenvalue={lam_min:.3g})")
    return rho


def tensor(a, b, cap: int | None = None) -> np.ndarray:
    """Kronecker product ``a ⊗ b``.

    Raises:
        CapacityError: if the composite dimension exceeds the configured cap.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    check_dim(a.shape[0] * b.shape[0], cap)
    return np.kron(a, b)


def kron_all(ops: Iterable[np.ndarray], cap: int | None = None) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = tensor(out, op, cap)
    return out


def _keep_index(keep) -> int:
    if keep in (0, "A", "a", "first", "B_first"):
        return 0
    if keep in (1, "B", "b", "second"):
        return 1
    raise ValueError(f"unknown subsystem tag {keep!r}")


def partial_trace(op, keep, dims: Sequence[int]) -> np.ndarray:
    """Reduce a bipartite operator on ``dA*dB`` to the kept factor.

    ``keep`` is ``0``/``"A"`` for the first factor or ``1``/``"B"`` for the second.
    """
    op = np.asarray(op, dtype=complex)
    dA, dB = int(dims[0]), int(dims[1])
    if op.shape != (dA * dB, dA * dB):
        raise DimensionError(f"operator of shape {op.shape} does not factor as {dA}x{dB}")
    t = op.reshape(dA, dB, dA, dB)
    if _keep_index(keep) == 0:
        return np.einsum("ijkj->ik", t)
    return np.einsum("ijil->jl", t)


def reduce_to(op, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Partial trace on a multipartite operator, keeping the listed factors in order."""
    op = np.asarray(op, dtype=complex)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if op.shape != (total, total):
        raise DimensionError(f"operator of shape {op.shape} does not factor as {dims}")
    k = len(dims)
    keep = list(keep)
    t = op.reshape(dims + dims)
    traced = [i for i in range(k) if i not in keep]
    # Trace out from the highest index so positions stay valid.
    for i in sorted(traced, reverse=True):
        m = t.ndim // 2
        t = np.trace(t, axis1=i, axis2=i + m)
    # Remaining axes are ordered as the kept factors sorted ascending.
    kept_sorted = sorted(keep)
    perm = [kept_sorted.index(i) for i in keep]
    m = len(keep)
    t = np.transpose(t, perm + [p + m for p in perm])
    d = int(np.prod([dims[i] for i in keep])) if keep else 1
    return t.reshape(d, d)


def permute_subsystems(op, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: factor ``order[i]`` of the input becomes factor ``i``."""
    op = np.asarray(op, dtype=complex)
    dims = [int(d) for d in dims]
    k = len(dims)
    t = op.reshape(dims + dims)
    order = list(order)
    t = np.transpose(t, order + [o + k for o in order])
    d = int(np.prod(dims))
    return t.reshape(d, d)


def _canonical_phase(v: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(v) > 1e-12)
    ph = v[idx] / abs(v[idx]) if abs(v[idx]) > 0 else 1.0
    return v / ph


def spectral(h, hermitian: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition with eigenvalues in descending order.

    Eigenvector phases are fixed so the first non-negligible entry is real and
    positive; ties within ``TIE_TOL`` are ordered by lexicographic comparison of
    the (rounded) eigenvectors so the output is reproducible.

    Returns:
        ``(eigenvalues, V)`` with orthonormal eigenvectors in the columns of ``V``.
    """
    h = as_operator(h)
    if not hermitian:
        raise ValidationError("spectral() only supports Hermitian input")
    if not is_hermitian(h, SPECTRAL_HERMITIAN_TOL):
        raise ValidationError("spectral(): input is not Hermitian within tolerance")
    h = 0.5 * (h + dagger(h))
    w, v = np.linalg.eigh(h)
    v = np.stack([_canonical_phase(v[:, i]) for i in range(v.shape[1])], axis=1)

    # Lexicographic keys per column: (-Re v_0, -Im v_0, -Re v_1, ...), rounded.
    keys = np.empty((2 * v.shape[0], v.shape[1]))
    keys[0::2] = -np.round(v.real, 9)
    keys[1::2] = -np.round(v.imag, 9)

    order = np.argsort(-w, kind="stable")
    # Regroup ties and sort each group lexicographically.
    out = []
    i = 0
    while i < len(order):
        j = i + 1
        while j < len(order) and abs(w[order[j]] - w[order[i]]) <= TIE_TOL:
            j += 1
        group = order[i:j]
        if len(group) > 1:
            group = group[np.lexsort(keys[::-1][:, group])]
        out.extend(group)
        i = j
    out = np.array(out, dtype=int)
    return w[out], v[:, out]


def _clipped_spectrum(h) -> tuple[np.ndarray, np.ndarray]:
    w, v = spectral(h)
    if w.size and w[-1] < -CLIP_TOL:
        raise ValidationError(f"operator is not positive semi-definite (min eigenvalue={w[-1]:.3g})")
    w = np.clip(w, 0.0, None)
    if w.size:
        # Round-off eigenvalues on the numerical kernel count as exact zeros.
        w[w <= SUPPORT_TOL * max(w[0], 1.0)] = 0.0
    return w, v


def operator_function(h, f: str, t: float | None = None) -> np.ndarray:
    """Apply a scalar function to a PSD operator through its eigenbasis.

    Supported ``f``: ``"power"`` (with exponent ``t``) and ``"log2"``. Zero
    eigenvalues stay zero under ``power`` for ``t > 0`` and are mapped to zero by
    ``log2`` (the ``0 log 0 = 0`` convention on the support).
    """
    w, v = _clipped_spectrum(h)
    if f == "power":
        if t is None:
            raise ValueError("power requires an exponent")
        if t == 1:
            vals = w
        else:
            support = w > 0
            vals = np.zeros_like(w)
            vals[support] = w[support] ** t
    elif f == "log2":
        support = w > 0
        vals = np.zeros_like(w)
        vals[support] = np.log2(w[support])
    else:
        raise ValueError(f"unsupported function {f!r}")
    return (v * vals) @ dagger(v)


def mpow(h, t: float) -> np.ndarray:
    return operator_function(h, "power", t)


def mlog2(h) -> np.ndarray:
    return operator_function(h, "log2")


def trace_norm(op) -> float:
    """Sum of singular values."""
    op = np.asarray(op, dtype=complex)
    if is_hermitian(op, 1e-12):
        return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (op + dagger(op))))))
    return float(np.sum(np.linalg.svd(op, compute_uv=False)))


def op_norm(op) -> float:
    return float(np.linalg.norm(np.asarray(op, dtype=complex), 2))


def fidelity_overlap(rho, op) -> float:
    """``Re tr(rho @ op)``, the expectation of ``op`` in ``rho``."""
    return float(np.real(np.einsum("ij,ji->", rho, op)))


def ket(d: int, i: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[i] = 1.0
    return v


def projector(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    return np.outer(vec, vec.conj())


def basis_projector(d: int, i: int) -> np.ndarray:
    return projector(ket(d, i))


def maximally_mixed(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex) / d


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_state(d: int, rng: np.random.Generator, rank: int | None = None,
                 floor: float = 0.0) -> np.ndarray:
    """Hilbert-Schmidt random density operator (induced measure for ``rank < d``).

    ``floor`` mixes in the maximally mixed state, ``rho -> (1-floor) rho + floor 1/d``,
    which bounds the smallest eigenvalue below by ``floor / d``.
    """
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = g @ dagger(g)
    rho /= np.real(np.trace(rho))
    if floor:
        rho = (1 - floor) * rho + floor * maximally_mixed(d)
    return 0.5 * (rho + dagger(rho))


def random_pure_state(d: int, rng: np.random.Generator) -> np.ndarray:
    return random_state(d, rng, rank=1)


def random_effect(d: int, rng: np.random.Generator) -> np.ndarray:
    """Random operator ``0 <= T <= 1``."""
    u = random_unitary(d, rng)
    return (u * rng.uniform(0, 1, size=d)) @ dagger(u)


@dataclass(frozen=True)
class Povm:
    """An ordered list of effects summing to the identity.

    A trailing ``abort`` element, if present, is an extra outcome that never
    counts as a correct decision.
    """

    elements: tuple = field(default_factory=tuple)
    has_abort: bool = False

    def __post_init__(self):
        els = tuple(np.asarray(e, dtype=complex) for e in self.elements)
        object.__setattr__(self, "elements", els)
        validate_povm(els)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    @property
    def n_outcomes(self) -> int:
        """Number of message outcomes (excluding the abort element)."""
        return len(self.elements) - (1 if self.has_abort else 0)

    def __getitem__(self, i) -> np.ndarray:
        return self.elements[i]

    def __len__(self) -> int:
        return self.n_outcomes


def validate_povm(elements: Sequence[np.ndarray]) -> None:
    if len(elements) == 0:
        raise ValidationError("POVM must have at least one element")
    d = elements[0].shape[0]
    total = np.zeros((d, d), dtype=complex)
    for k, e in enumerate(elements):
        if e.shape != (d, d):
            raise DimensionError(f"POVM element {k} has shape {e.shape}, expected {(d, d)}")
        if not is_hermitian(e, POVM_ELEMENT_TOL):
            raise ValidationError(f"POVM element {k} is not Hermitian")
        if np.linalg.eigvalsh(0.5 * (e + dagger(e)))[0] < -POVM_ELEMENT_TOL:
            raise ValidationError(f"POVM element {k} is not positive semi-definite")
        total += e
    dev = op_norm(total - np.eye(d))
    if dev > POVM_SUM_TOL:
        raise ValidationError(f"POVM elements sum to identity only within {dev:.3g}")


def complete_povm(elements: Sequence[np.ndarray]) -> Povm:
    """Append ``1 - sum(elements)`` as an abort outcome when it is non-negligible."""
    els = [np.asarray(e, dtype=complex) for e in elements]
    d = els[0].shape[0]
    rest = np.eye(d, dtype=complex) - sum(els)
    rest = 0.5 * (rest + dagger(rest))
    if op_norm(rest) > 1e-12:
        w, v = np.linalg.eigh(rest)
        rest = (v * np.clip(w, 0, None)) @ dagger(v)
        return Povm(tuple(els) + (rest,), has_abort=True)
    return Povm(tuple(els), has_abort=False)
