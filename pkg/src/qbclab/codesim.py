"""Desk-scale universal superposition codes with privacy amplification.

Block lengths are small enough that every output state is a dense matrix, so
errors and leakages are evaluated exactly rather than sampled.

Index conventions: outer messages ``m0 in [M0]``; inner codewords of ``m0`` are
``y_words[m0, j * L + l]`` for confidential message ``j`` and randomization
index ``l``; Bob's composed outcome ``(m0, j)`` has index ``m0 * J + j``.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from qbclab.channels import CompoundSet, CqChannel, CqqBroadcastChannel, marginal
from qbclab.entropics import entropy, entropy_continuity, gentle_measurement_bound
from qbclab.errors import DimensionError, ExperimentError, ValidationError
from qbclab.linalg import (
    Povm,
    check_dim,
    complete_povm,
    dagger,
    kron_all,
    mpow,
    op_norm,
    trace_norm,
)
from qbclab.regions import FactorizedInput, member_terms
from qbclab.typicality import pruned, typical_projector

GRAM_TOL = 1e-12


# ---------------------------------------------------------------------------
# Codebooks


@dataclass(frozen=True)
class CodebookLayout:
    """Sizes ``M0`` (outer), ``J`` (confidential) and ``L`` (randomization) at block length ``n``."""

    M0: int = 1
    J: int = 1
    L: int = 1
    n: int = 1

    def __post_init__(self):
        for name in ("M0", "J", "L", "n"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"layout field {name} must be at least 1")

    @property
    def inner(self) -> int:
        return self.J * self.L


@dataclass(frozen=True, eq=False)
class SuperpositionCodebook:
    u_words: np.ndarray
    y_words: np.ndarray
    layout: CodebookLayout
    provenance: dict = field(default_factory=dict)

    def inner_words(self, m0: int, j: int) -> np.ndarray:
        L = self.layout.L
        return self.y_words[m0, j * L:(j + 1) * L]

    def restrict(self, J: int | None = None, L: int | None = None) -> "SuperpositionCodebook":
        """Sub-codebook keeping the first ``J`` messages and first ``L`` randomization words."""
        J = self.layout.J if J is None else J
        L = self.layout.L if L is None else L
        if J > self.layout.J or L > self.layout.L:
            raise ValidationError("restriction can only shrink the layout")
        n = self.layout.n
        y = self.y_words.reshape(self.layout.M0, self.layout.J, self.layout.L, n)[:, :J, :L]
        lay = CodebookLayout(self.layout.M0, J, L, n)
        return SuperpositionCodebook(self.u_words, y.reshape(self.layout.M0, J * L, n), lay,
                                     dict(self.provenance, restricted=True))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_superposition_codebook(q, r, layout: CodebookLayout, delta: float, seed=0) -> SuperpositionCodebook:
    """Outer words i.i.d. from the pruned ``q``, inner words i.i.d. from the pruned ``r(.|u_m)``.

    Raises:
        ConstructionError: if a typical set is empty.
    """
    rng = _rng(seed)
    n = layout.n
    q = np.asarray(q, dtype=float)
    r = np.atleast_2d(np.asarray(r, dtype=float))
    outer = pruned(q, n, delta)
    u_words = outer.sample(rng, layout.M0)
    inner_cache: dict = {}
    y_words = np.empty((layout.M0, layout.inner, n), dtype=np.int64)
    for m in range(layout.M0):
        key = tuple(u_words[m])
        if key not in inner_cache:
            inner_cache[key] = pruned(r, n, delta, x_word=u_words[m])
        y_words[m] = inner_cache[key].sample(rng, layout.inner)
    prov = {"delta": delta, "outer_mass": outer.mass,
            "inner_mass": {str(list(k)): v.mass for k, v in inner_cache.items()}}
    if not isinstance(seed, np.random.Generator):
        prov["seed"] = seed
    return SuperpositionCodebook(u_words, y_words, layout, prov)


# ---------------------------------------------------------------------------
# Product states


def product_state(outputs: np.ndarray, word, cap: int | None = None) -> np.ndarray:
    return kron_all((outputs[int(a)] for a in word), cap)


def averaged_states(channels: Sequence[np.ndarray], words: np.ndarray, cap: int | None = None) -> np.ndarray:
    """``(1/|S|) sum_s W_s^{⊗n}(w)`` for every word ``w``; ``channels`` are output arrays."""
    words = np.atleast_2d(words)
    d = channels[0].shape[1]
    check_dim(d ** words.shape[1], cap)
    out = np.zeros((len(words), d ** words.shape[1], d ** words.shape[1]), dtype=complex)
    for outs in channels:
        for k, w in enumerate(words):
            out[k] += product_state(outs, w, cap)
    return out / len(channels)


def letter_mixture(outputs: np.ndarray, r) -> np.ndarray:
    """``u -> sum_y r(y|u) W(y)``."""
    return np.einsum("uy,yij->uij", np.atleast_2d(r), outputs)


def pruned_output(outputs: np.ndarray, r, u_word, delta: float) -> np.ndarray:
    """``sum_y r'(y|u) W^{⊗n}(y)`` for the pruned conditional law."""
    law = pruned(r, len(u_word), delta, x_word=u_word)
    d = outputs.shape[1] ** len(u_word)
    acc = np.zeros((d, d), dtype=complex)
    for p, y in zip(law.probs, law.support):
        acc += p * product_state(outputs, y)
    return acc


# ---------------------------------------------------------------------------
# Decoders


def _inv_sqrt_on_support(g: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (g + dagger(g)))
    top = max(float(w.max()), 0.0)
    keep = w > GRAM_TOL * max(top, 1.0)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return (v * inv) @ dagger(v)


def _positive_projector(h: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (h + dagger(h)))
    cols = v[:, w > GRAM_TOL]
    return cols @ dagger(cols)


def _symmetrize(ops):
    return [0.5 * (e + dagger(e)) for e in ops]


def build_decoder(states, method: str = "pgm", reference=None, threshold: float = 1.0) -> Povm:
    """Square-root decoder for codeword output states.

    ``pgm``: ``Lambda_m = G^{-1/2} S_m G^{-1/2}`` with ``G = sum_k S_k`` inverted on
    its support. ``hn``: the same normalization applied to the projections
    ``{S_m - threshold * reference > 0}``, where ``reference`` defaults to the
    average codeword state. Either way the remainder ``1 - sum Lambda`` becomes
    an abort outcome when nonzero.
    """
    states = np.asarray(states, dtype=complex)
    m = states.shape[0]
    d = states.shape[1]
    if m == 1:
        return Povm((np.eye(d, dtype=complex),))
    if method == "pgm":
        pieces = states
    elif method == "hn":
        ref = states.mean(axis=0) if reference is None else np.asarray(reference, dtype=complex)
        pieces = np.array([_positive_projector(s - threshold * ref) for s in states])
    else:
        raise ValueError(f"unknown decoder method {method!r}")
    g_is = _inv_sqrt_on_support(pieces.sum(axis=0))
    return complete_povm(_symmetrize([g_is @ p @ g_is for p in pieces]))


def success_probabilities(povm: Povm, states) -> np.ndarray:
    """``tr(Lambda_m rho_m)`` for each message ``m``."""
    states = np.asarray(states, dtype=complex)
    return np.array([float(np.real(np.sum(povm[k].T * states[k]))) for k in range(len(states))])


def average_error(povm: Povm, states) -> float:
    """``1 - (1/M) sum_m tr(Lambda_m rho_m)`` with ``rho_m`` the output state of message ``m``."""
    states = np.asarray(states, dtype=complex)
    if povm.n_outcomes < len(states):
        raise DimensionError(f"POVM has {povm.n_outcomes} outcomes for {len(states)} messages")
    return float(min(max(1.0 - success_probabilities(povm, states).mean(), 0.0), 1.0))


# ---------------------------------------------------------------------------
# Wiretap codes


@dataclass(frozen=True, eq=False)
class WiretapCode:
    """Stochastic encoder plus Bob's ``(m0, j)`` and Eve's ``m0`` decoders."""

    codebook: SuperpositionCodebook
    t: np.ndarray
    bob_povm: Povm
    eve_povm: Povm | None
    parts: dict = field(default_factory=dict)

    @property
    def layout(self) -> CodebookLayout:
        return self.codebook.layout

    def encoder(self, m0: int, j: int, alphabet_size: int | None = None) -> np.ndarray:
        """``E(x^n|m0, j) = (1/L) sum_l t^{⊗n}(x^n|y_{m0 j l})`` over all ``x^n`` in lexicographic order."""
        k = self.t.shape[1] if alphabet_size is None else alphabet_size
        n = self.layout.n
        words = np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64)
        dist = np.zeros(len(words))
        for y in self.codebook.inner_words(m0, j):
            dist += np.prod(self.t[y[None, :], words], axis=1)
        return dist / self.layout.L


def compose_decoders(outer: Povm, inner: Sequence[Povm], J: int, L: int) -> Povm:
    """Bob's decoder ``B_{m0 j} = sum_l sqrt(D_m0) Lambda^{m0}_{jL+l} sqrt(D_m0)``."""
    els = []
    for m0, lam in enumerate(inner):
        root = mpow(outer[m0], 0.5)
        for j in range(J):
            acc = sum(lam[j * L + l] for l in range(L))
            els.append(root @ acc @ root)
    return complete_povm(_symmetrize(els))


def build_wiretap_code(codebook: SuperpositionCodebook, t, outer_bob: Povm, inner_bob: Sequence[Povm],
                       outer_eve: Povm | None = None) -> WiretapCode:
    """Assemble the code from an outer decoder, per-``m0`` inner decoders and Eve's outer decoder."""
    lay = codebook.layout
    t = np.atleast_2d(np.asarray(t, dtype=float))
    if np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-12):
        raise ValidationError("t rows must sum to 1")
    if len(inner_bob) != lay.M0:
        raise ValidationError(f"{len(inner_bob)} inner decoders for M0={lay.M0}")
    if outer_bob.n_outcomes < lay.M0:
        raise ValidationError("outer decoder has fewer outcomes than M0")
    for k, p in enumerate(inner_bob):
        if p.n_outcomes < lay.inner:
            raise ValidationError(f"inner decoder {k} has {p.n_outcomes} outcomes, layout needs J*L={lay.inner}")
    bob = compose_decoders(outer_bob, inner_bob, lay.J, lay.L)
    return WiretapCode(codebook, t, bob, outer_eve, {"outer_bob": outer_bob, "inner_bob": list(inner_bob)})


def message_states(code: WiretapCode, outputs: np.ndarray) -> np.ndarray:
    """``rho_{m0 j} = (1/L) sum_l W~^{⊗n}(y_{m0 j l})`` for the effective channel ``W~ = W∘t``.

    ``outputs`` are the per-letter outputs of one receiver over ``X``.
    """
    eff = np.einsum("yx,xij->yij", code.t, np.asarray(outputs, dtype=complex))
    lay = code.layout
    d = eff.shape[1] ** lay.n
    check_dim(d)
    out = np.zeros((lay.M0, lay.J, d, d), dtype=complex)
    for m0 in range(lay.M0):
        for j in range(lay.J):
            for y in code.codebook.inner_words(m0, j):
                out[m0, j] += product_state(eff, y)
    return out / lay.L


def materialized_message_states(code: WiretapCode, outputs: np.ndarray) -> np.ndarray:
    """Same as :func:`message_states` but through the explicit encoder ``E(x^n|m0, j)``."""
    outputs = np.asarray(outputs, dtype=complex)
    k = outputs.shape[0]
    lay = code.layout
    words = list(itertools.product(range(k), repeat=lay.n))
    d = outputs.shape[1] ** lay.n
    out = np.zeros((lay.M0, lay.J, d, d), dtype=complex)
    for m0 in range(lay.M0):
        for j in range(lay.J):
            dist = code.encoder(m0, j, k)
            for p, w in zip(dist, words):
                if p > 0:
                    out[m0, j] += p * product_state(outputs, w)
    return out


def bob_error(code: WiretapCode, bob_outputs, materialize: bool = False) -> float:
    states = (materialized_message_states if materialize else message_states)(code, bob_outputs)
    lay = code.layout
    return average_error(code.bob_povm, states.reshape(lay.M0 * lay.J, *states.shape[2:]))


def eve_error(code: WiretapCode, eve_outputs) -> float:
    """Eve's average error on the outer message."""
    if code.eve_povm is None:
        raise ValidationError("code has no Eve decoder")
    states = message_states(code, eve_outputs)
    lay = code.layout
    succ = [float(np.real(np.sum(code.eve_povm[m0].T * states[m0, j])))
            for m0 in range(lay.M0) for j in range(lay.J)]
    return float(min(max(1.0 - np.mean(succ), 0.0), 1.0))


def leakage_from_states(states: np.ndarray) -> float:
    """``(1/M0) sum_m0 [S(avg_j sigma_j) - avg_j S(sigma_j)]`` for states of shape ``(M0, J, d, d)``."""
    total = 0.0
    for per_m0 in states:
        total += entropy(per_m0.mean(axis=0)) - np.mean([entropy(s) for s in per_m0])
    return float(total / len(states))


def security_leakage(code: WiretapCode, eve_outputs, materialize: bool = False) -> float:
    """``I(M_c; E | M_0)`` of the code state with uniform messages, in bits."""
    states = (materialized_message_states if materialize else message_states)(code, eve_outputs)
    return leakage_from_states(states)


def leakage_continuity_bound(code: WiretapCode, eve_outputs, reference) -> tuple[float, float]:
    """Leakage bound from the entropy continuity bound at the measured deviation.

    With ``delta = max_{m0, j} ||sigma_{m0 j} - reference||_1`` both ``S(avg_j sigma)``
    and every ``S(sigma_j)`` lie within ``F(delta)`` of ``S(reference)``, so the
    leakage is at most ``2 F(delta)``. Returns ``(bound, delta)``.
    """
    states = message_states(code, eve_outputs)
    ref = np.asarray(reference, dtype=complex)
    delta = max(trace_norm(s - ref) for per in states for s in per)
    return 2 * entropy_continuity(delta, ref.shape[0]), float(delta)


# ---------------------------------------------------------------------------
# Smoothed Eve outputs


@dataclass
class ProjectedEveOutput:
    """``Q(y) = Pi Pi(y) W~^{⊗n}(y) Pi(y) Pi`` for codewords ``y`` and ``Theta = E_{r'} Q``."""

    q_ops: np.ndarray
    theta: np.ndarray
    deficits: np.ndarray
    total_deficits: np.ndarray
    smoothing_errors: np.ndarray

    def smoothing_bounds(self) -> np.ndarray:
        """Per-codeword bound from two gentle-measurement steps."""
        g = np.vectorize(gentle_measurement_bound)
        first = g(self.deficits)
        return first + g(self.total_deficits + first)


def project_eve_outputs(eff_outputs: np.ndarray, r, u_word, y_words: np.ndarray, delta: float) -> ProjectedEveOutput:
    """Doubly projected Eve outputs for the given codewords of one outer word.

    ``eff_outputs`` is the effective channel ``W~_E`` over ``Y`` and ``r[u, y] = r(y|u)``.
    """
    eff = np.asarray(eff_outputs, dtype=complex)
    r = np.atleast_2d(np.asarray(r, dtype=float))
    u_word = np.asarray(u_word, dtype=int)
    total = typical_projector(eff, u_word, delta, kind="total", conditioning=(r, None)).projector

    def q_of(y):
        w = product_state(eff, y)
        p_y = typical_projector(eff, u_word, delta, kind="conditional", conditioning=(r, y)).projector
        inner = p_y @ w @ p_y
        q = total @ inner @ total
        return w, p_y, q

    law = pruned(r, len(u_word), delta, x_word=u_word)
    theta = np.zeros_like(total)
    for p, y in zip(law.probs, law.support):
        theta += p * q_of(y)[2]
    q_ops, deficits, tot_def, errs = [], [], [], []
    for y in np.atleast_2d(y_words):
        w, p_y, q = q_of(y)
        q_ops.append(q)
        deficits.append(1.0 - float(np.real(np.sum(w.T * p_y))))
        tot_def.append(1.0 - float(np.real(np.sum(w.T * total))))
        errs.append(trace_norm(w - q))
    return ProjectedEveOutput(np.array(q_ops), theta, np.clip(deficits, 0, None),
                              np.clip(tot_def, 0, None), np.array(errs))


# ---------------------------------------------------------------------------
# Covering concentration


def covering_bound(d: int, mu: float, eps: float, L: int) -> float:
    """``2 d exp(-L eps^3 / (2 d mu ln 2))``."""
    return float(2 * d * np.exp(-L * eps ** 3 / (2 * d * mu * np.log(2))))


@dataclass
class CoveringReport:
    L: int
    trials: int
    violations: int
    rate: float
    bound: float
    sigma: float
    passed: bool
    mean: np.ndarray


def covering_check(sampler: Callable[[np.random.Generator, int], np.ndarray], mu: float, eps: float, L: int,
                   trials: int = 2000, seed: int = 0, prepass: int = 100_000) -> CoveringReport:
    """Empirical rate of ``||(1/L) sum X_i - E X||_1 > eps`` against the covering bound.

    ``E X`` is estimated from ``prepass`` samples, which also validate
    ``0 <= X <= mu 1``; ``E X >= eps 1`` is checked on the estimate. The check
    passes iff the rate is at most ``bound + 3 sigma`` with the binomial
    ``sigma = sqrt(b (1 - b) / trials)`` at ``b = min(bound, 1)``.

    Raises:
        ValidationError: on an operator-range violation or ``eps`` outside ``(0, 1/2)``.
    """
    if not 0 < eps < 0.5:
        raise ValidationError(f"eps must lie in (0, 1/2), got {eps}")
    if mu <= 0:
        raise ValidationError("mu must be positive")
    rng = np.random.default_rng(seed)
    pre = np.asarray(sampler(rng, prepass), dtype=complex)
    d = pre.shape[1]
    _check_range(pre, mu)
    mean = pre.mean(axis=0)
    lam_min = float(np.linalg.eigvalsh(0.5 * (mean + dagger(mean)))[0])
    if lam_min < eps - 1e-9:
        raise ValidationError(f"E X >= eps 1 violated (min eigenvalue {lam_min:.4g} < {eps})")
    violations = 0
    for _ in range(trials):
        batch = np.asarray(sampler(rng, L), dtype=complex)
        _check_range(batch, mu)
        if trace_norm(batch.mean(axis=0) - mean) > eps:
            violations += 1
    rate = violations / trials
    bound = covering_bound(d, mu, eps, L)
    b = min(bound, 1.0)
    sigma = float(np.sqrt(b * (1 - b) / trials))
    return CoveringReport(L, trials, violations, rate, bound, sigma, bool(rate <= bound + 3 * sigma), mean)


def _check_range(xs: np.ndarray, mu: float) -> None:
    w = np.linalg.eigvalsh(0.5 * (xs + dagger(xs)))
    if w.min() < -1e-9 or w.max() > mu + 1e-9:
        raise ValidationError(f"sampler violates 0 <= X <= mu 1 (spectrum in [{w.min():.4g}, {w.max():.4g}])")


def bernoulli_diagonal_sampler(p: float = 0.5, d: int = 2):
    """``X = diag(b_1, ..., b_d)`` with independent ``b_i ~ Bernoulli(p)``."""

    def sample(rng, size):
        bits = (rng.random((size, d)) < p).astype(float)
        out = np.zeros((size, d, d), dtype=complex)
        out[:, np.arange(d), np.arange(d)] = bits
        return out

    return sample


# ---------------------------------------------------------------------------
# Experiments


@dataclass(frozen=True)
class LayoutPolicy:
    """How ``(M0, J, L)`` follow from the entropic rates.

    With ``R0`` the outer rate, ``IB = inf I(Y;B|U)``, ``IE = sup I(Y;E|U)`` and a
    back-off ``D = margin * IB``: ``M0 = floor(2^{n (1-margin) R0})``,
    ``J = floor(2^{n (IB - IE - 2D)})``, ``L = ceil(2^{n (IE + D)})``; each is at
    least 1. ``fixed`` (a mapping ``n -> (M0, J, L)`` or a callable) overrides it.
    """

    margin: float = 0.15
    delta: float = 0.25
    fixed: object = None
    max_inner: int = 256

    def layout(self, n: int, rates: dict) -> CodebookLayout:
        if self.fixed is not None:
            sizes = self.fixed(n) if callable(self.fixed) else self.fixed[n]
            return CodebookLayout(int(sizes[0]), int(sizes[1]), int(sizes[2]), n)
        m = self.margin
        ib, ie = rates["IB"], rates["IE"]
        back = m * ib
        m0 = max(1, int(np.floor(2 ** (n * (1 - m) * rates["R0"]) + 1e-9)))
        j = max(1, int(np.floor(2 ** (n * (ib - ie - 2 * back)) + 1e-9)))
        l = max(1, int(np.ceil(2 ** (n * (ie + back)) - 1e-9)))
        if j * l > self.max_inner:
            raise ValidationError(f"layout J*L={j * l} exceeds max_inner={self.max_inner} at n={n}")
        return CodebookLayout(m0, j, l, n)


def compound_rates(compound: CompoundSet, inp: FactorizedInput, mode: str = "bcc") -> dict:
    terms = [member_terms(m, inp) for m in compound.members]
    ub = min(t["I(U;B)"] for t in terms)
    ue = min(t["I(U;E)"] for t in terms)
    r0 = min(ub, ue) if mode == "bcc" else ub
    return {"R0": r0, "IB": min(t["I(Y;B|U)"] for t in terms), "IE": max(t["I(Y;E|U)"] for t in terms)}


@dataclass
class ExperimentReport:
    mode: str
    rows: list
    layouts: dict
    rates: dict
    summary: dict
    seeds: list
    runtime: float
    partial: bool = False

    def mean_max_error(self, n: int) -> float:
        per_seed = {}
        for row in self.rows:
            if row["n"] == n:
                per_seed[row["seed"]] = max(per_seed.get(row["seed"], 0.0), row["e_B"])
        return float(np.mean(list(per_seed.values())))


def _receiver_outputs(compound: CompoundSet, receiver: str) -> list:
    out = []
    for m in compound.members:
        if isinstance(m, CqqBroadcastChannel):
            out.append(marginal(m, receiver).outputs)
        elif receiver == "B":
            out.append(m.outputs)
        else:
            out.append(np.ones((m.alphabet_size, 1, 1), dtype=complex))
    return out


def build_code(compound: CompoundSet, inp: FactorizedInput, codebook: SuperpositionCodebook,
               mode: str = "bcc", method: str = "pgm") -> WiretapCode:
    """Decoders against the member average and the composed wiretap code."""
    t = inp.t
    bob = [np.einsum("yx,xij->yij", t, o) for o in _receiver_outputs(compound, "B")]
    lay = codebook.layout
    hat_b = [letter_mixture(w, inp.r) for w in bob]
    outer_b = build_decoder(averaged_states(hat_b, codebook.u_words), method)
    inner = [build_decoder(averaged_states(bob, codebook.y_words[m0]), method) for m0 in range(lay.M0)]
    outer_e = None
    if mode == "bcc":
        eve = [np.einsum("yx,xij->yij", t, o) for o in _receiver_outputs(compound, "E")]
        hat_e = [letter_mixture(w, inp.r) for w in eve]
        outer_e = build_decoder(averaged_states(hat_e, codebook.u_words), method)
    return build_wiretap_code(codebook, t, outer_b, inner, outer_e)


def run_universal_experiment(compound: CompoundSet, inp: FactorizedInput, policy: LayoutPolicy | None = None,
                             n_grid: Sequence[int] = (4, 6, 8), seeds: Sequence[int] = (0,), mode: str = "bcc",
                             method: str = "pgm", smoothing: bool = False, base_seed: int = 0) -> ExperimentReport:
    """Sample, decode and evaluate codes for every ``n`` and seed.

    The codebook for ``(seed, n)`` is drawn from ``default_rng([base_seed, seed, n])``
    and does not depend on the compound, so runs on different compounds are
    matched. Rows hold ``(n, seed, member, e_B, e_E, leakage)``; ``e_E`` is
    ``nan`` in TPC mode. With ``smoothing`` the report also carries the
    measured ``eps_0`` and ``eps_1`` of the projected Eve outputs for ``m0 = 0``.
    """
    if inp.l != 1:
        raise ValidationError("experiments use letter-wise inputs (l = 1)")
    policy = policy or LayoutPolicy()
    start = time.perf_counter()
    rates = compound_rates(compound, inp, mode)
    bob_x = _receiver_outputs(compound, "B")
    eve_x = _receiver_outputs(compound, "E")
    rows, layouts, summary = [], {}, {}
    partial = False
    try:
        for n in n_grid:
            layout = policy.layout(n, rates)
            layouts[n] = layout
            eps_n, eps0, eps1 = [], [], []
            for seed in seeds:
                rng = np.random.default_rng([base_seed, int(seed), int(n)])
                book = sample_superposition_codebook(inp.q, inp.r, layout, policy.delta, rng)
                code = build_code(compound, inp, book, mode, method)
                worst = 0.0
                for s, (wb, we) in enumerate(zip(bob_x, eve_x)):
                    e_b = bob_error(code, wb)
                    e_e = eve_error(code, we) if mode == "bcc" else float("nan")
                    leak = security_leakage(code, we)
                    worst = max(worst, e_b, 0.0 if np.isnan(e_e) else e_e)
                    rows.append({"n": int(n), "seed": int(seed), "member": s, "e_B": e_b,
                                 "e_E": e_e, "leakage": leak})
                eps_n.append(worst)
                if smoothing:
                    for we in eve_x:
                        eff = np.einsum("yx,xij->yij", inp.t, we)
                        proj = project_eve_outputs(eff, inp.r, book.u_words[0], book.y_words[0], policy.delta)
                        l_ = layout.L
                        avg = proj.q_ops.reshape(layout.J, l_, *proj.q_ops.shape[1:]).mean(axis=1)
                        eps0.append(max(trace_norm(a - proj.theta) for a in avg))
                        eps1.append(float(proj.smoothing_errors.max()))
            summary[n] = {"eps_n": float(np.mean(eps_n)),
                          "eps_0": float(max(eps0)) if eps0 else None,
                          "eps_1": float(max(eps1)) if eps1 else None}
    except Exception as exc:  # noqa: BLE001
        partial = True
        summary["error"] = f"{type(exc).__name__}: {exc}"
        raise_exc = exc
    else:
        raise_exc = None
    report = ExperimentReport(mode, rows, {int(k): vars(v) for k, v in layouts.items()}, rates, summary,
                              [int(s) for s in seeds], time.perf_counter() - start, partial)
    if raise_exc is not None:
        raise ExperimentError(str(raise_exc), report) from raise_exc
    return report

