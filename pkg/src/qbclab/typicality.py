"""Method of types: typical sets, pruned distributions and typical projectors.

Words are integer ``numpy`` arrays; word lists are 2-D arrays of shape
``(count, n)`` in lexicographic order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np

from qbclab.entropics import entropy
from qbclab.errors import CapacityError, ConstructionError, DomainError, ValidationError
from qbclab.linalg import check_dim, dagger, kron_all, spectral

TYPE_GUARD = 10 ** 6
WORD_GUARD = 10 ** 7
ZERO_PROB = 1e-12
COUNT_TOL = 1e-12


@dataclass(frozen=True)
class TypeVector:
    """Letter counts of a word of length ``n``."""

    counts: tuple

    @property
    def n(self) -> int:
        return int(sum(self.counts))

    @property
    def alphabet_size(self) -> int:
        return len(self.counts)

    def distribution(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n


def type_of(word, alphabet_size: int) -> TypeVector:
    return TypeVector(tuple(int(c) for c in np.bincount(np.asarray(word, dtype=int), minlength=alphabet_size)))


def enumerate_types(alphabet_size: int, n: int) -> list[TypeVector]:
    """All types of length-``n`` words, in reverse lexicographic order of counts."""
    if alphabet_size < 1 or n < 0:
        raise DomainError("alphabet size must be positive and n non-negative")
    total = comb(n + alphabet_size - 1, alphabet_size - 1)
    if total > TYPE_GUARD:
        raise CapacityError(f"{total} types exceed the enumeration guard {TYPE_GUARD}")

    def rec(k, rest):
        if k == 1:
            yield (rest,)
            return
        for c in range(rest, -1, -1):
            for tail in rec(k - 1, rest - c):
                yield (c,) + tail

    return [TypeVector(c) for c in rec(alphabet_size, n)]


def all_words(alphabet_size: int, n: int) -> np.ndarray:
    total = alphabet_size ** n
    if total > WORD_GUARD:
        raise CapacityError(f"{alphabet_size}^{n} words exceed the enumeration guard {WORD_GUARD}")
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    idx = np.arange(total, dtype=np.int64)
    powers = alphabet_size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % alphabet_size


def _counts(words: np.ndarray, alphabet_size: int) -> np.ndarray:
    return np.stack([(words == a).sum(axis=1) for a in range(alphabet_size)], axis=1)


def _as_prob(p, name="p") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValidationError(f"{name} must be a probability vector")
    return p


def _typical_mask(counts: np.ndarray, n: int, p: np.ndarray, delta: float) -> np.ndarray:
    close = np.all(np.abs(counts / n - p[None, :]) <= delta + COUNT_TOL, axis=1)
    support = np.all((p[None, :] > ZERO_PROB) == (counts > 0), axis=1)
    return close & support


def is_typical(word, p, delta: float) -> bool:
    p = _as_prob(p)
    word = np.asarray(word, dtype=int)[None, :]
    return bool(_typical_mask(_counts(word, len(p)), word.shape[1], p, delta)[0])


def typical_set(p, n: int, delta: float) -> np.ndarray:
    """Words with ``|N(x|w)/n - p(x)| <= delta`` for all ``x`` and ``p(x)=0 <=> N(x|w)=0``."""
    p = _as_prob(p)
    words = all_words(len(p), n)
    return words[_typical_mask(_counts(words, len(p)), n, p, delta)]


def _as_conditional(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.ndim != 2 or np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-12):
        raise ValidationError("conditional distribution must be a row-stochastic matrix t[x, y]")
    return t


def _conditional_mask(words: np.ndarray, t: np.ndarray, x_word: np.ndarray, delta: float) -> np.ndarray:
    n = len(x_word)
    mask = np.ones(len(words), dtype=bool)
    for x in np.unique(x_word):
        pos = x_word == x
        nx = int(pos.sum())
        joint = _counts(words[:, pos], t.shape[1])
        mask &= np.all(np.abs(joint / n - t[x][None, :] * nx / n) <= delta + COUNT_TOL, axis=1)
        mask &= np.all((t[x][None, :] > ZERO_PROB) == (joint > 0), axis=1)
    return mask


def is_conditionally_typical(y_word, t, x_word, delta: float) -> bool:
    t = _as_conditional(t)
    y = np.asarray(y_word, dtype=int)[None, :]
    return bool(_conditional_mask(y, t, np.asarray(x_word, dtype=int), delta)[0])


def conditionally_typical_set(t, x_word, delta: float) -> np.ndarray:
    """Words ``y`` that are jointly typical with ``x_word`` under ``t[x, y] = t(y|x)``.

    The support condition ``t(y|x)=0 <=> N(x,y|x,y)=0`` is imposed for the letters
    ``x`` that occur in ``x_word``; for absent letters all joint counts vanish and
    the condition cannot be met by any word.
    """
    t = _as_conditional(t)
    x_word = np.asarray(x_word, dtype=int)
    words = all_words(t.shape[1], len(x_word))
    return words[_conditional_mask(words, t, x_word, delta)]


@dataclass(frozen=True)
class PrunedDistribution:
    """An i.i.d. law restricted and renormalized to its typical set."""

    n: int
    support: np.ndarray
    probs: np.ndarray
    mass: float

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(len(self.probs), size=size, p=self.probs)
        return self.support[idx]

    def tv_to_iid(self) -> float:
        """Total-variation distance to the unpruned law, ``1 - mass``."""
        return 1.0 - self.mass

    def l1_to_iid(self) -> float:
        return 2.0 * (1.0 - self.mass)


def _iid_prob(words: np.ndarray, p: np.ndarray) -> np.ndarray:
    return np.prod(p[words], axis=1) if words.shape[1] else np.ones(len(words))


def pruned(p, n: int, delta: float, x_word=None) -> PrunedDistribution:
    """Pruned law of ``p`` (or of ``t(.|x)`` given ``x_word`` when ``p`` is a matrix)."""
    if x_word is None:
        p = _as_prob(p)
        support = typical_set(p, n, delta)
        weights = _iid_prob(support, p)
        desc = f"p={p.tolist()}, n={n}, delta={delta}"
    else:
        t = _as_conditional(p)
        x_word = np.asarray(x_word, dtype=int)
        n = len(x_word)
        support = conditionally_typical_set(t, x_word, delta)
        weights = np.prod(t[x_word[None, :], support], axis=1) if n else np.ones(len(support))
        desc = f"t={t.tolist()}, x_word={x_word.tolist()}, delta={delta}"
    if len(support) == 0:
        raise ConstructionError(f"empty typical set for {desc}")
    mass = float(weights.sum())
    if mass <= 0:
        raise ConstructionError(f"typical set has zero probability for {desc}")
    return PrunedDistribution(n=n, support=support, probs=weights / mass, mass=mass)


# ---------------------------------------------------------------------------
# Typical projectors


@dataclass(frozen=True)
class TypicalProjector:
    """Projector with the statistics that the typical-subspace bounds refer to.

    ``stats`` holds ``overlap`` (``tr(rho Pi)``), ``rank``, ``lambda_max``
    (largest eigenvalue of ``Pi rho Pi``), ``cond_entropy`` (the conditional
    entropy ``S`` at the empirical letter type), ``delta_meas = log2(rank)/n - S``
    and ``gamma_meas = S + log2(lambda_max)/n``. For the total-conditional kind
    ``overlap_y`` is ``tr(Pi W^{⊗n}(y))``.
    """

    projector: np.ndarray
    kind: str
    stats: dict = field(default_factory=dict)


KINDS = ("unconditional", "conditional", "total")


def _pattern_letters(states, x_word, kind, conditioning):
    """Per-position pattern labels and the per-pattern-label states."""
    states = np.asarray(states, dtype=complex)
    x_word = np.asarray(x_word, dtype=int)
    if kind == "unconditional":
        return x_word, {int(x): states[x] for x in np.unique(x_word)}
    if conditioning is None:
        raise ValidationError(f"kind {kind!r} requires conditioning=(r, y_word)")
    r, y_word = conditioning
    r = _as_conditional(r)
    if kind == "total":
        mix = np.einsum("xy,yij->xij", r, states)
        return x_word, {int(x): mix[x] for x in np.unique(x_word)}
    y_word = np.asarray(y_word, dtype=int)
    if len(y_word) != len(x_word):
        raise ValidationError("y_word and x_word must have equal length")
    n_y = states.shape[0]
    labels = x_word * n_y + y_word
    return labels, {int(a): states[int(a) % n_y] for a in np.unique(labels)}


def _spectra(label_states: dict):
    return {a: spectral(s) for a, s in label_states.items()}


def _mask_and_eigs(labels: np.ndarray, spectra: dict, delta: float):
    """Frequency-typical eigenvalue sequences given the label pattern."""
    n = len(labels)
    d = next(iter(spectra.values()))[0].shape[0]
    seqs = all_words(d, n)
    mask = np.ones(len(seqs), dtype=bool)
    for a, (w, _) in spectra.items():
        pos = labels == a
        na = int(pos.sum())
        lam = np.clip(w, 0.0, None)
        joint = _counts(seqs[:, pos], d)
        mask &= np.all(np.abs(joint / n - lam[None, :] * na / n) <= delta + COUNT_TOL, axis=1)
        mask &= np.all((lam[None, :] > ZERO_PROB) == (joint > 0), axis=1)
    eig_rows = np.array([np.clip(spectra[int(a)][0], 0.0, None) for a in labels])
    probs = np.prod(eig_rows[np.arange(n)[None, :], seqs], axis=1) if n else np.ones(1)
    return mask, probs


def _box_limits(lam: np.ndarray, weight: float, delta: float):
    lo = np.where(lam > ZERO_PROB, np.clip(lam - delta / weight, 0.0, 1.0), 0.0)
    hi = np.where(lam > ZERO_PROB, np.clip(lam + delta / weight, 0.0, 1.0), 0.0)
    return lo, hi


def _max_entropy_in_box(lo: np.ndarray, hi: np.ndarray) -> float:
    """``max H(q)`` over ``lo <= q <= hi`` on the simplex (water filling)."""
    a, b = 0.0, 1.0
    for _ in range(200):
        c = 0.5 * (a + b)
        if np.clip(c, lo, hi).sum() < 1.0:
            a = c
        else:
            b = c
    q = np.clip(0.5 * (a + b), lo, hi)
    q = q[q > 0]
    return float(-np.sum(q * np.log2(q)))


def _min_cost_in_box(cost: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """``min sum q c`` over ``lo <= q <= hi`` on the simplex (greedy fill)."""
    q = lo.copy()
    rest = 1.0 - q.sum()
    for j in np.argsort(cost, kind="stable"):
        add = min(hi[j] - q[j], rest)
        q[j] += add
        rest -= add
    return float(np.sum(q * np.where(q > 0, cost, 0.0)))


def limit_constants(states, x_word, delta: float, kind: str = "unconditional", conditioning=None) -> dict:
    """Large-``n`` values of the rank and eigenvalue exponents at the empirical type.

    ``rank_exponent`` is the largest entropy compatible with the frequency box
    around each letter's spectrum, so ``log2(rank)/n`` approaches it from
    below; ``eig_exponent`` is the smallest value of ``-log2(lambda)/n`` on the
    box, approached from above. ``delta_limit = rank_exponent - S`` and
    ``gamma_limit = S - eig_exponent``.
    """
    labels, label_states = _pattern_letters(states, x_word, kind, conditioning)
    n = len(labels)
    rank_exp = eig_exp = s = 0.0
    for a, st in label_states.items():
        frac = float(np.sum(labels == a)) / n
        lam = np.clip(spectral(st)[0], 0.0, None)
        lo, hi = _box_limits(lam, frac, delta)
        cost = np.where(lam > ZERO_PROB, -np.log2(np.where(lam > ZERO_PROB, lam, 1.0)), 0.0)
        rank_exp += frac * _max_entropy_in_box(lo, hi)
        eig_exp += frac * _min_cost_in_box(cost, lo, hi)
        s += frac * entropy(st)
    return {"cond_entropy": s, "rank_exponent": rank_exp, "eig_exponent": eig_exp,
            "delta_limit": rank_exp - s, "gamma_limit": s - eig_exp}


def typical_projector(states, x_word, delta: float, kind: str = "unconditional",
                      conditioning=None, reference=None, cap: int | None = None) -> TypicalProjector:
    """Frequency-typical projector in the per-letter eigenbasis.

    Args:
        states: per-letter states; ``rho_x`` for the unconditional kind, ``W(y)``
            for the conditional and total kinds.
        x_word: the conditioning word.
        delta: typicality tolerance.
        kind: ``"unconditional"`` projects for ``rho_x``; ``"conditional"`` for
            ``W^{⊗n}(y)`` with pattern ``(x_i, y_i)``; ``"total"`` for
            ``rho_x = sum_y r(y|x) W(y)``.
        conditioning: ``(r, y_word)`` with ``r[x, y] = r(y|x)``; required for the
            conditional and total kinds (``y_word`` may be ``None`` for total).
        reference: optional distribution the ``x_word`` must be typical for.

    Raises:
        ValidationError: if ``x_word`` is not typical for ``reference``.
        CapacityError: if ``d^n`` exceeds the dimension cap.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    x_word = np.asarray(x_word, dtype=int)
    states = np.asarray(states, dtype=complex)
    if reference is not None and not is_typical(x_word, reference, delta):
        raise ValidationError(f"x_word {x_word.tolist()} is not typical for the reference distribution")
    n = len(x_word)
    d = states.shape[1]
    check_dim(d ** n, cap)
    labels, label_states = _pattern_letters(states, x_word, kind, conditioning)
    spectra = _spectra(label_states)
    mask, probs = _mask_and_eigs(labels, spectra, delta)

    basis = kron_all((spectra[int(a)][1] for a in labels), cap)
    cols = basis[:, mask]
    proj = cols @ dagger(cols)

    rho = kron_all((label_states[int(a)] for a in labels), cap)
    overlap = float(np.real(np.sum(rho.T * proj)))
    rank = int(mask.sum())
    lam_max = float(probs[mask].max()) if rank else 0.0
    lim = limit_constants(states, x_word, delta, kind, conditioning)
    s = lim["cond_entropy"]
    stats = {
        "n": n,
        "overlap": overlap,
        "rank": rank,
        "lambda_max": lam_max,
        "cond_entropy": s,
        "delta_meas": (np.log2(rank) / n - s) if rank else float("-inf"),
        "gamma_meas": (s + np.log2(lam_max) / n) if lam_max > 0 else float("-inf"),
        "delta_limit": lim["delta_limit"],
        "gamma_limit": lim["gamma_limit"],
    }
    if kind == "total" and conditioning is not None and conditioning[1] is not None:
        w_y = kron_all((states[int(y)] for y in np.asarray(conditioning[1], dtype=int)), cap)
        stats["overlap_y"] = float(np.real(np.sum(w_y.T * proj)))
    return TypicalProjector(projector=proj, kind=kind, stats=stats)


def word_iter(alphabet_size: int, n: int):
    """Lexicographic iterator over all words (no guard; for small loops)."""
    return itertools.product(range(alphabet_size), repeat=n)
