"""Classical-quantum channels, broadcast channels, compound sets and tau-nets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from qbclab.errors import DimensionError, DomainError, PartialNetError, ValidationError
from qbclab.linalg import (
    check_dim,
    dagger,
    kron_all,
    op_norm,
    partial_trace,
    trace_norm,
    validate_state,
)


def _stack_states(outputs, name: str) -> np.ndarray:
    outs = [validate_state(o, name=f"{name}[{k}]") for k, o in enumerate(outputs)]
    if not outs:
        raise ValidationError(f"{name}: at least one output is required")
    shapes = {o.shape for o in outs}
    if len(shapes) != 1:
        raise DimensionError(f"{name}: outputs have mixed shapes {sorted(shapes)}")
    return np.array(outs)


@dataclass(frozen=True, eq=False)
class CqChannel:
    """Map from letters ``0..|Y|-1`` to density operators on a common space."""

    outputs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "outputs", _stack_states(self.outputs, "outputs"))

    @property
    def alphabet_size(self) -> int:
        return self.outputs.shape[0]

    @property
    def dim(self) -> int:
        return self.outputs.shape[1]

    def __call__(self, y: int) -> np.ndarray:
        return self.outputs[y]

    def average(self, p) -> np.ndarray:
        return np.einsum("y,yij->ij", np.asarray(p, dtype=float), self.outputs)

    def compose(self, t) -> "CqChannel":
        """Pre-process with a stochastic matrix ``t[y, x]``: ``y -> sum_x t(x|y) W(x)``."""
        t = np.asarray(t, dtype=float)
        return CqChannel(np.einsum("yx,xij->yij", t, self.outputs))


@dataclass(frozen=True, eq=False)
class CqqBroadcastChannel:
    """cq channel whose outputs live on ``H_B ⊗ H_E`` with ``dims = (d_B, d_E)``."""

    outputs: np.ndarray
    dims: tuple

    def __post_init__(self):
        outs = _stack_states(self.outputs, "outputs")
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 2 or dims[0] * dims[1] != outs.shape[1]:
            raise DimensionError(f"output dimension {outs.shape[1]} does not equal d_B*d_E for dims {dims}")
        object.__setattr__(self, "outputs", outs)
        object.__setattr__(self, "dims", dims)

    @property
    def alphabet_size(self) -> int:
        return self.outputs.shape[0]

    @property
    def dim(self) -> int:
        return self.outputs.shape[1]

    def __call__(self, x: int) -> np.ndarray:
        return self.outputs[x]

    def compose(self, t) -> "CqqBroadcastChannel":
        t = np.asarray(t, dtype=float)
        return CqqBroadcastChannel(np.einsum("yx,xij->yij", t, self.outputs), self.dims)


def marginal(channel: CqqBroadcastChannel, receiver: str) -> CqChannel:
    """Per-letter partial trace over the other receiver (``receiver`` is ``"B"`` or ``"E"``)."""
    if receiver not in ("B", "E"):
        raise ValueError(f"receiver must be 'B' or 'E', got {receiver!r}")
    keep = 0 if receiver == "B" else 1
    return CqChannel(np.array([partial_trace(o, keep, channel.dims) for o in channel.outputs]))


def apply_word(channel, word: Sequence[int], cap: int | None = None) -> np.ndarray:
    """Memoryless output ``W(x_1) ⊗ ... ⊗ W(x_n)``."""
    word = [int(x) for x in word]
    k = channel.alphabet_size
    for x in word:
        if not 0 <= x < k:
            raise DomainError(f"letter {x} outside alphabet of size {k}")
    check_dim(channel.dim ** len(word), cap)
    return kron_all((channel.outputs[x] for x in word), cap)


def cq_distance(w, v) -> float:
    """``max_x ||W(x) - V(x)||_1``."""
    a = np.asarray(w.outputs)
    b = np.asarray(v.outputs)
    if a.shape != b.shape:
        raise ValidationError(f"channel shapes differ: {a.shape} vs {b.shape}")
    return max(trace_norm(a[x] - b[x]) for x in range(a.shape[0]))


def _cq_distances_to(channel, pool: np.ndarray) -> np.ndarray:
    """Distances from one channel to every channel in a stacked ``(N, X, d, d)`` pool."""
    diff = pool - channel.outputs[None]
    ev = np.linalg.eigvalsh(0.5 * (diff + dagger(diff)))
    return np.abs(ev).sum(axis=-1).max(axis=-1)


@dataclass(frozen=True, eq=False)
class CompoundSet:
    """Finite indexed family of channels with common alphabet and dimensions."""

    members: tuple
    provenance: dict = field(default_factory=lambda: {"kind": "literal"})

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValidationError("compound set must be nonempty")
        first = members[0]
        for k, m in enumerate(members):
            if type(m) is not type(first):
                raise ValidationError(f"member {k} has type {type(m).__name__}, expected {type(first).__name__}")
            if m.outputs.shape != first.outputs.shape:
                raise DimensionError(f"member {k} has shape {m.outputs.shape}, expected {first.outputs.shape}")
            if getattr(m, "dims", None) != getattr(first, "dims", None):
                raise DimensionError(f"member {k} has dims {m.dims}, expected {first.dims}")
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]

    @property
    def alphabet_size(self) -> int:
        return self.members[0].alphabet_size

    @property
    def dims(self):
        return getattr(self.members[0], "dims", None)

    def marginal(self, receiver: str) -> "CompoundSet":
        return CompoundSet(tuple(marginal(m, receiver) for m in self.members), dict(self.provenance))

    def subset(self, indices: Sequence[int]) -> "CompoundSet":
        return CompoundSet(tuple(self.members[i] for i in indices), {"kind": "subset", "of": dict(self.provenance)})


@dataclass(frozen=True, eq=False)
class CptpChannel:
    """Channel ``L(H_A) -> L(H_B ⊗ H_E)`` in Kraus form."""

    kraus: tuple
    dims: tuple

    def __post_init__(self):
        ks = tuple(np.asarray(k, dtype=complex) for k in self.kraus)
        dims = tuple(int(d) for d in self.dims)
        if not ks:
            raise ValidationError("at least one Kraus operator is required")
        d_out = dims[0] * dims[1]
        d_in = ks[0].shape[1]
        for i, k in enumerate(ks):
            if k.shape != (d_out, d_in):
                raise DimensionError(f"Kraus operator {i} has shape {k.shape}, expected {(d_out, d_in)}")
        dev = op_norm(sum(dagger(k) @ k for k in ks) - np.eye(d_in))
        if dev > 1e-8:
            raise ValidationError(f"Kraus operators are not trace preserving (deviation {dev:.3g})")
        object.__setattr__(self, "kraus", ks)
        object.__setattr__(self, "dims", dims)

    @property
    def input_dim(self) -> int:
        return self.kraus[0].shape[1]

    def __call__(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        return sum(k @ rho @ dagger(k) for k in self.kraus)


# ---------------------------------------------------------------------------
# tau-nets

Sampler = Callable[[np.random.Generator], object]


def net_cardinality_log2_bound(tau: float, alphabet_size: int, dim: int) -> float:
    """``log2`` of the existence bound ``(6/tau)^(2 |X| dim^2)`` on the size of a tau-net."""
    return float(2 * alphabet_size * dim ** 2 * np.log2(6.0 / tau))


def _farthest_point_order(pool: np.ndarray, limit: int) -> tuple[list[int], list[float]]:
    """Greedy farthest-point traversal of a stacked channel pool.

    Returns the visiting order and, after each prefix, the covering radius of
    the prefix over the pool. The order does not depend on any target radius,
    so nets for smaller radii extend nets for larger ones.
    """
    n = pool.shape[0]
    order = [0]
    first = _Stacked(pool[0])
    mind = _cq_distances_to(first, pool)
    radii = [float(mind.max())]
    while len(order) < min(limit, n) and radii[-1] > 0:
        nxt = int(np.argmax(mind))
        order.append(nxt)
        mind = np.minimum(mind, _cq_distances_to(_Stacked(pool[nxt]), pool))
        radii.append(float(mind.max()))
    return order, radii


class _Stacked:
    __slots__ = ("outputs",)

    def __init__(self, outputs):
        self.outputs = outputs


def build_net(family: Sampler, tau: float, budget: int = 2048, seed: int = 0,
              shrink: float = 0.9, max_size: int | None = None) -> CompoundSet:
    """Greedy farthest-point tau-net drawn from a seeded channel sampler.

    ``budget`` candidate members are drawn with ``np.random.default_rng(seed)``;
    the net is the shortest farthest-point prefix whose covering radius over
    the candidates is below ``shrink * tau``. The ``shrink`` factor leaves room
    for members that fall between candidates.

    Raises:
        DomainError: if ``tau`` is outside ``(0, 1/e)``.
        PartialNetError: if ``max_size`` members do not reach the target radius.
    """
    if not 0.0 < tau < 1.0 / np.e:
        raise DomainError(f"tau must lie in (0, 1/e), got {tau}")
    rng = np.random.default_rng(seed)
    candidates = [family(rng) for _ in range(budget)]
    pool = np.array([c.outputs for c in candidates])
    limit = budget if max_size is None else max_size
    order, radii = _farthest_point_order(pool, limit)
    target = shrink * tau
    size = next((k + 1 for k, r in enumerate(radii) if r < target), None)
    first = candidates[0]
    log2_bound = net_cardinality_log2_bound(tau, first.alphabet_size, first.dim)
    if size is None:
        partial = CompoundSet(tuple(candidates[i] for i in order),
                              {"kind": "net", "tau": tau, "seed": seed, "partial": True})
        raise PartialNetError(
            f"net budget exhausted at size {len(order)} with covering radius {radii[-1]:.4g} > {target:.4g}",
            net=partial, radius=radii[-1])
    if np.log2(size) > log2_bound:
        raise PartialNetError(f"net of size {size} exceeds the cardinality bound", radius=radii[size - 1])
    members = tuple(candidates[i] for i in order[:size])
    return CompoundSet(members, {"kind": "net", "tau": tau, "seed": seed, "budget": budget,
                                 "radius": radii[size - 1], "log2_bound": log2_bound})


@dataclass
class NetReport:
    max_distance: float
    passed: bool
    tau: float
    size: int
    samples: int
    n_letter_max: dict
    n_letter_passed: bool
    log2_cardinality_bound: float

    @property
    def within_cardinality_bound(self) -> bool:
        return bool(np.log2(self.size) < self.log2_cardinality_bound)


def verify_net(net: CompoundSet, family: Sampler, tau: float, samples: int = 10_000,
               seed: int = 1, n_values: Sequence[int] = (1, 2, 3), words_per_n: int = 4,
               n_letter_samples: int = 50) -> NetReport:
    """Check the covering radius of ``net`` on fresh samples of ``family``.

    For the first ``n_letter_samples`` samples also checks
    ``||W^{⊗n}(x) - W'^{⊗n}(x)||_1 <= 2 n tau`` against the nearest net member on
    random words. Failures are reported, not raised.
    """
    rng = np.random.default_rng(seed)
    pool = np.array([m.outputs for m in net.members])
    max_d = 0.0
    n_letter = {int(n): 0.0 for n in n_values}
    k = net.alphabet_size
    for i in range(samples):
        w = family(rng)
        dists = _cq_distances_to(w, pool)
        j = int(np.argmin(dists))
        max_d = max(max_d, float(dists[j]))
        if i < n_letter_samples:
            for n in n_values:
                for _ in range(words_per_n):
                    word = rng.integers(0, k, size=n)
                    dev = trace_norm(apply_word(w, word) - apply_word(net.members[j], word))
                    n_letter[int(n)] = max(n_letter[int(n)], dev)
    n_ok = all(v <= 2 * n * tau + 1e-12 for n, v in n_letter.items())
    first = net.members[0]
    return NetReport(
        max_distance=max_d,
        passed=bool(max_d <= tau),
        tau=tau,
        size=len(net),
        samples=samples,
        n_letter_max=n_letter,
        n_letter_passed=bool(n_ok),
        log2_cardinality_bound=net_cardinality_log2_bound(tau, first.alphabet_size, first.dim),
    )


def finite_family(compound: CompoundSet) -> Sampler:
    """Sampler drawing members of a finite compound uniformly at random."""
    members = compound.members

    def sample(rng):
        return members[int(rng.integers(0, len(members)))]

    return sample


# ---------------------------------------------------------------------------
# Stock channels


def noiseless_cq(d: int = 2, relabel: Sequence[int] | None = None) -> CqChannel:
    perm = list(range(d)) if relabel is None else list(relabel)
    return CqChannel(np.array([np.diag(np.eye(d)[perm[x]]).astype(complex) for x in range(d)]))


def bit_flip_cq(q: float) -> CqChannel:
    """Qubit outputs ``(1-q)|y><y| + q|1-y><1-y|``."""
    return CqChannel(np.array([np.diag([1 - q, q]), np.diag([q, 1 - q])]).astype(complex))


def depolarizing_cq(p: float, d: int = 2) -> CqChannel:
    """``x -> (1-p)|x><x| + p 1/d``."""
    return CqChannel(np.array([(1 - p) * np.diag(np.eye(d)[x]) + p * np.eye(d) / d
                               for x in range(d)]).astype(complex))


def broadcast(bob: CqChannel, eve: CqChannel) -> CqqBroadcastChannel:
    """Product-output cqq channel ``x -> W_B(x) ⊗ W_E(x)``."""
    if bob.alphabet_size != eve.alphabet_size:
        raise DimensionError("Bob and Eve channels need a common input alphabet")
    outs = np.array([np.kron(bob.outputs[x], eve.outputs[x]) for x in range(bob.alphabet_size)])
    return CqqBroadcastChannel(outs, (bob.dim, eve.dim))


def constant_cq(state, alphabet_size: int) -> CqChannel:
    state = np.asarray(state, dtype=complex)
    return CqChannel(np.array([state] * alphabet_size))


def depolarizing_family(p_low: float = 0.0, p_high: float = 1.0) -> Sampler:
    """One-parameter family of qubit depolarized-basis cq channels, ``p ~ U[p_low, p_high]``."""

    def sample(rng):
        return depolarizing_cq(float(rng.uniform(p_low, p_high)))

    return sample


def identity_cptp(d: int = 2) -> CptpChannel:
    """``rho -> rho`` into ``H_B`` with a trivial (one-dimensional) ``H_E``."""
    return CptpChannel((np.eye(d, dtype=complex),), (d, 1))


def depolarizing_cptp(p: float, d: int = 2) -> CptpChannel:
    """Qubit depolarizing channel to Bob with trivial Eve."""
    if d != 2:
        raise ValueError("only the qubit depolarizing channel is provided")
    paulis = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
    ks = [np.sqrt(1 - 3 * p / 4) * paulis[0]] + [np.sqrt(p / 4) * s for s in paulis[1:]]
    return CptpChannel(tuple(np.asarray(k, dtype=complex) for k in ks), (2, 1))
