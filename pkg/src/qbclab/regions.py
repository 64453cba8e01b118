"""Achievable-rate regions for compound cqq broadcast channels.

A factorized input ``q(u) r(y|u) t(x|y)`` induces, for each member ``W_s``, the
state ``omega_s = sum q(u) r(y|u) |u><u| ⊗ |y><y| ⊗ W_s^{⊗l}(t(.|y))``. The BCC
corner is ``(inf_s min{I(U;B), I(U;E)}, inf_s I(Y;B|U) - sup_s I(Y;E|U))`` and
the TPC corner replaces the first coordinate with ``inf_s I(U;B)``; all terms
are divided by ``l``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from qbclab.channels import CompoundSet, CptpChannel, CqChannel, CqqBroadcastChannel, marginal
from qbclab.entropics import continuity_bounds, holevo
from qbclab.errors import DimensionError, ValidationError
from qbclab.linalg import check_dim, kron_all, permute_subsystems, validate_state

ROW_TOL = 1e-12
MODES = ("bcc", "tpc")


def _stochastic(m, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if np.any(m < -ROW_TOL) or np.any(np.abs(m.sum(axis=1) - 1.0) > ROW_TOL):
        raise ValidationError(f"{name}: rows must be probability vectors")
    return np.clip(m, 0.0, None)


@dataclass(frozen=True, eq=False)
class FactorizedInput:
    """Input law ``q(u) r(y|u) t(x|y)`` for block parameter ``l``.

    ``t`` is either ``|Y| x |X|^l`` or ``|Y| x |X|``; in the second case each of the
    ``l`` letters is drawn independently from ``t(.|y)``.
    """

    l: int
    q: np.ndarray
    r: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        q = _stochastic(self.q, "q")[0]
        r = _stochastic(self.r, "r")
        t = _stochastic(self.t, "t")
        if r.shape[0] != len(q):
            raise DimensionError(f"r has {r.shape[0]} rows for |U|={len(q)}")
        if t.shape[0] != r.shape[1]:
            raise DimensionError(f"t has {t.shape[0]} rows for |Y|={r.shape[1]}")
        if int(self.l) < 1:
            raise ValidationError("block parameter l must be at least 1")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "l", int(self.l))

    def block_t(self, alphabet_size: int) -> np.ndarray:
        """``t(x^l|y)`` as a ``|Y| x |X|^l`` matrix."""
        if self.t.shape[1] == alphabet_size ** self.l and (self.l > 1 or self.t.shape[1] == alphabet_size):
            return self.t
        if self.t.shape[1] != alphabet_size:
            raise DimensionError(f"t has {self.t.shape[1]} columns for |X|={alphabet_size}, l={self.l}")
        out = self.t
        for _ in range(self.l - 1):
            out = np.einsum("ya,yb->yab", out, self.t).reshape(self.t.shape[0], -1)
        return out

    def to_dict(self) -> dict:
        return {"l": self.l, "q": self.q.tolist(), "r": self.r.tolist(), "t": self.t.tolist()}


@dataclass(frozen=True)
class RegionCorner:
    """One corner ``(r_pub, r_c)``; ``r_pub`` is ``R_0`` (BCC) or ``R_1`` (TPC)."""

    r_pub: float
    r_c: float
    mode: str
    attaining: dict = field(default_factory=dict)
    terms: dict = field(default_factory=dict)


def _block_outputs(channel: CqChannel, t_block: np.ndarray, l: int) -> np.ndarray:
    """``V(y) = sum_{x^l} t(x^l|y) W^{⊗l}(x^l)`` for every ``y``."""
    k = channel.alphabet_size
    check_dim(channel.dim ** l)
    outs = []
    for row in t_block:
        acc = np.zeros((channel.dim ** l,) * 2, dtype=complex)
        for idx, word in enumerate(itertools.product(range(k), repeat=l)):
            if row[idx] > 0:
                acc += row[idx] * kron_all(channel.outputs[x] for x in word)
        outs.append(acc)
    return np.array(outs)


def _receiver_terms(channel: CqChannel, inp: FactorizedInput) -> tuple[float, float]:
    """``(I(U;R), I(Y;R|U))`` for one receiver marginal, in bits per block."""
    v = _block_outputs(channel, inp.block_t(channel.alphabet_size), inp.l)
    per_u = np.einsum("uy,yij->uij", inp.r, v)
    i_u = holevo(inp.q, per_u)
    i_y_u = sum(qu * holevo(inp.r[u], v) for u, qu in enumerate(inp.q) if qu > 0)
    return i_u, float(i_y_u)


def member_terms(member, inp: FactorizedInput) -> dict:
    """Entropic terms of ``omega_s`` for one member, divided by ``l``."""
    if isinstance(member, CqqBroadcastChannel):
        ub, yb = _receiver_terms(marginal(member, "B"), inp)
        ue, ye = _receiver_terms(marginal(member, "E"), inp)
    else:
        ub, yb = _receiver_terms(member, inp)
        ue = ye = 0.0
    l = inp.l
    return {"I(U;B)": ub / l, "I(Y;B|U)": yb / l, "I(U;E)": ue / l, "I(Y;E|U)": ye / l}


def _corner(compound: CompoundSet, inp: FactorizedInput, mode: str) -> tuple[RegionCorner, float]:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    terms = [member_terms(m, inp) for m in compound.members]
    ub = np.array([t["I(U;B)"] for t in terms])
    ue = np.array([t["I(U;E)"] for t in terms])
    yb = np.array([t["I(Y;B|U)"] for t in terms])
    ye = np.array([t["I(Y;E|U)"] for t in terms])
    attaining = {"inf I(U;B)": int(np.argmin(ub)), "inf I(Y;B|U)": int(np.argmin(yb)),
                 "sup I(Y;E|U)": int(np.argmax(ye))}
    if mode == "bcc":
        attaining["inf I(U;E)"] = int(np.argmin(ue))
        r_pub = float(min(ub.min(), ue.min()))
    else:
        r_pub = float(ub.min())
    rc_raw = float(yb.min() - ye.max())
    corner = RegionCorner(
        r_pub=max(r_pub, 0.0), r_c=max(rc_raw, 0.0), mode=mode, attaining=attaining,
        terms={"per_member": terms, "rc_raw": rc_raw})
    return corner, rc_raw


def evaluate_bcc_corner(compound: CompoundSet, inp: FactorizedInput) -> RegionCorner:
    """``(inf_s min{I(U;B), I(U;E)}, max(0, inf_s I(Y;B|U) - sup_s I(Y;E|U)))`` per use."""
    return _corner(compound, inp, "bcc")[0]


def evaluate_tpc_corner(compound: CompoundSet, inp: FactorizedInput) -> RegionCorner:
    """``(inf_s I(V;B), max(0, inf_s I(Y;B|V) - sup_s I(Y;E|V)))`` per use."""
    return _corner(compound, inp, "tpc")[0]


def evaluation_state(member, inp: FactorizedInput) -> tuple[np.ndarray, tuple]:
    """The ccq(q) state ``omega_s`` on ``U ⊗ Y ⊗ B^l ⊗ E^l`` and its subsystem dims."""
    k = member.alphabet_size
    t_block = inp.block_t(k)
    l = inp.l
    if isinstance(member, CqqBroadcastChannel):
        d_b, d_e = member.dims
        outs = np.array(reduce_blocks(member, t_block, l))
        out_dims = (d_b ** l, d_e ** l)
    else:
        outs = _block_outputs(member, t_block, l)
        out_dims = (member.dim ** l, 1)
    n_u, n_y = inp.r.shape
    d_out = outs.shape[1]
    check_dim(n_u * n_y * d_out)
    omega = np.zeros((n_u * n_y * d_out,) * 2, dtype=complex)
    for u in range(n_u):
        for y in range(n_y):
            w = inp.q[u] * inp.r[u, y]
            if w > 0:
                i = (u * n_y + y) * d_out
                omega[i:i + d_out, i:i + d_out] = w * outs[y]
    return omega, (n_u, n_y) + out_dims


def reduce_blocks(member: CqqBroadcastChannel, t_block: np.ndarray, l: int) -> list:
    """Block outputs ``sum t(x^l|y) W(x_1) ⊗ ... ⊗ W(x_l)`` reordered to ``B^l ⊗ E^l``."""
    d_b, d_e = member.dims
    dims = [d_b, d_e] * l
    order = list(range(0, 2 * l, 2)) + list(range(1, 2 * l, 2))
    k = member.alphabet_size
    outs = []
    for row in t_block:
        acc = 0
        for idx, word in enumerate(itertools.product(range(k), repeat=l)):
            if row[idx] > 0:
                acc = acc + row[idx] * kron_all(member.outputs[x] for x in word)
        outs.append(permute_subsystems(acc, dims, order) if l > 1 else acc)
    return outs


# ---------------------------------------------------------------------------
# Regions and optimization


def _pareto(points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    keep = []
    for i, p in enumerate(points):
        dominated = np.any(np.all(points >= p - tol, axis=1) & np.any(points > p + tol, axis=1))
        if not dominated:
            keep.append(i)
    pts = points[keep]
    pts = np.unique(np.round(pts, 14), axis=0)
    return pts[np.argsort(pts[:, 0])]


def _upper_hull(points: np.ndarray) -> np.ndarray:
    """Vertices of the upper-right concave hull of Pareto points sorted by first coordinate."""
    pts = sorted(map(tuple, points))
    hull: list = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return np.array(hull)


@dataclass
class RateRegion:
    """Corners found by the optimizer and the upper-right hull ``frontier``."""

    corners: list
    frontier: np.ndarray
    mode: str
    slack: float = 0.0
    inputs: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    converged: list = field(default_factory=list)

    def contains(self, point, tol: float = 1e-6) -> bool:
        """Whether ``(r_pub, r_c)`` lies in the convex hull of the corner rectangles (within ``tol``)."""
        x, y = float(point[0]), float(point[1])
        f = self.frontier
        if x < -tol or y < -tol:
            return False
        if x > f[:, 0].max() + tol:
            return False
        if x <= f[0, 0]:
            return y <= f[0, 1] + tol
        for (x1, y1), (x2, y2) in zip(f[:-1], f[1:]):
            if x1 - tol <= x <= x2 + tol:
                lam = 0.0 if x2 == x1 else min(max((x - x1) / (x2 - x1), 0.0), 1.0)
                return y <= y1 + lam * (y2 - y1) + tol
        return y <= tol

    def max_rc(self) -> float:
        return float(self.frontier[:, 1].max())

    def max_pub(self) -> float:
        return float(self.frontier[:, 0].max())


def region_from_corners(corners: Sequence[RegionCorner], mode: str, slack: float = 0.0) -> RateRegion:
    pts = np.array([[c.r_pub, c.r_c] for c in corners]) if corners else np.zeros((1, 2))
    pareto = _pareto(pts)
    return RateRegion(corners=list(corners), frontier=_upper_hull(pareto), mode=mode, slack=slack)


@dataclass(frozen=True)
class OptimizerConfig:
    seed: int = 0
    restarts: int = 4
    iterations: int = 60
    weights: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    initial_step: float = 0.25
    min_step: float = 1e-4
    penalty: float = 1e-4
    tie: float = 1e-6


def net_slack(compound: CompoundSet, l: int) -> float:
    """Continuity slack for a net-discretized compound, zero for literal sets."""
    prov = compound.provenance or {}
    tau = prov.get("tau")
    if prov.get("kind") != "net" or tau is None:
        return 0.0
    dims = compound.dims or (compound.members[0].dim,)
    d = max(2, max(dims) ** l)
    return continuity_bounds(min(2.0 * l * tau, 2.0), d, "cmi") / l


def _structured_starts(n_u: int, n_y: int, n_x: int) -> list:
    eye_uy = np.eye(n_u, n_y) if n_u <= n_y else np.eye(n_u, n_y)
    eye_uy = np.where(eye_uy.sum(axis=1, keepdims=True) > 0, eye_uy, 1.0 / n_y)
    eye_uy = eye_uy / eye_uy.sum(axis=1, keepdims=True)
    eye_yx = np.eye(n_y, n_x)
    eye_yx = np.where(eye_yx.sum(axis=1, keepdims=True) > 0, eye_yx, 1.0 / n_x)
    eye_yx = eye_yx / eye_yx.sum(axis=1, keepdims=True)
    uni_u = np.full(n_u, 1.0 / n_u)
    point_u = np.eye(n_u)[0]
    uni_r = np.full((n_u, n_y), 1.0 / n_y)
    return [
        (uni_u, eye_uy, eye_yx),
        (point_u, uni_r, eye_yx),
        (uni_u, uni_r, eye_yx),
    ]


def _blocks(state):
    q, r, t = state
    return [q] + [r[i] for i in range(r.shape[0])] + [t[i] for i in range(t.shape[0])]


def _assemble(blocks, n_u, n_y):
    q = blocks[0]
    r = np.array(blocks[1:1 + n_u])
    t = np.array(blocks[1 + n_u:1 + n_u + n_y])
    return q, r, t


def optimize_region(compound: CompoundSet, sizes: tuple | None = None, l: int = 1,
                    config: OptimizerConfig | None = None, mode: str = "bcc") -> RateRegion:
    """Trace the frontier of the union of corners over factorized inputs.

    For every weight ``w`` in ``config.weights`` maximizes ``w R_pub + (1-w) R_c``
    by coordinate pattern search on the simplex blocks of ``(q, r, t)``: mass
    moves between two coordinates of one block with a step that halves when no
    move improves. Starts are a few structured inputs plus ``config.restarts``
    Dirichlet draws. Letter-wise ``t`` is used for ``l > 1``.
    """
    config = config or OptimizerConfig()
    n_x = compound.alphabet_size
    n_u, n_y = sizes if sizes is not None else (n_x, n_x)
    rng = np.random.default_rng(config.seed)
    starts = _structured_starts(n_u, n_y, n_x)
    for _ in range(config.restarts):
        starts.append((rng.dirichlet(np.ones(n_u)), rng.dirichlet(np.ones(n_y), size=n_u),
                       rng.dirichlet(np.ones(n_x), size=n_y)))

    cache: dict = {}

    def evaluate(blocks):
        key = tuple(np.round(np.concatenate(blocks), 13))
        hit = cache.get(key)
        if hit is None:
            q, r, t = _assemble(blocks, n_u, n_y)
            hit = _corner(compound, FactorizedInput(l, q, r, t), mode)
            cache[key] = hit
        return hit

    def objective(w, res):
        corner, rc_raw = res
        return (w * corner.r_pub + (1 - w) * corner.r_c + config.penalty * min(rc_raw, 0.0)
                + config.tie * (corner.r_pub + corner.r_c))

    corners, inputs, weights, converged = [], [], [], []
    for w in config.weights:
        best_val, best_blocks, best_ok = -np.inf, None, False
        for start in starts:
            blocks = [b.copy() for b in _blocks(start)]
            val = objective(w, evaluate(blocks))
            step = config.initial_step
            ok = False
            for _ in range(config.iterations):
                improved = False
                for bi, b in enumerate(blocks):
                    for i, j in itertools.permutations(range(len(b)), 2):
                        move = min(step, b[i])
                        if move <= 0:
                            continue
                        cand = b.copy()
                        cand[i] -= move
                        cand[j] += move
                        cand = np.clip(cand, 0.0, None)
                        cand /= cand.sum()
                        trial = blocks[:bi] + [cand] + blocks[bi + 1:]
                        tv = objective(w, evaluate(trial))
                        if tv > val + 1e-12:
                            blocks, val, b, improved = trial, tv, cand, True
                if not improved:
                    step /= 2
                    if step < config.min_step:
                        ok = True
                        break
            if val > best_val:
                best_val, best_blocks, best_ok = val, blocks, ok
        q, r, t = _assemble(best_blocks, n_u, n_y)
        inp = FactorizedInput(l, q, r, t)
        corners.append(_corner(compound, inp, mode)[0])
        inputs.append(inp)
        weights.append(float(w))
        converged.append(best_ok)
    region = region_from_corners(corners, mode, slack=net_slack(compound, l))
    region.inputs, region.weights, region.converged = inputs, weights, converged
    return region


def region_for_inputs(compound: CompoundSet, inputs: Sequence[FactorizedInput], mode: str = "bcc") -> RateRegion:
    """Region spanned by the corners of a fixed list of inputs."""
    corners = [_corner(compound, inp, mode)[0] for inp in inputs]
    region = region_from_corners(corners, mode, slack=net_slack(compound, inputs[0].l if inputs else 1))
    region.inputs = list(inputs)
    return region


# ---------------------------------------------------------------------------
# Fully quantum channels


def _tensor_kraus(channel: CptpChannel, l: int) -> list:
    return [kron_all(ks) for ks in itertools.product(channel.kraus, repeat=l)]


def reduce_full_quantum(family: Sequence[CptpChannel], signals: Sequence, l: int = 1) -> CompoundSet:
    """Effective compound ``y -> N_s^{⊗l}(rho_y)`` with outputs ordered ``B^l ⊗ E^l``.

    ``signals`` are states on ``H_A^{⊗l}``.
    """
    family = list(family)
    if not family:
        raise ValidationError("channel family must be nonempty")
    d_a = family[0].input_dim
    sig = [validate_state(s, name=f"signal[{k}]") for k, s in enumerate(signals)]
    check_dim(d_a ** l)
    for k, s in enumerate(sig):
        if s.shape[0] != d_a ** l:
            raise DimensionError(f"signal {k} has dimension {s.shape[0]}, expected {d_a ** l}")
    members = []
    for ch in family:
        if ch.input_dim != d_a:
            raise DimensionError("all channels need the same input dimension")
        d_b, d_e = ch.dims
        check_dim((d_b * d_e) ** l)
        ks = _tensor_kraus(ch, l)
        dims = [d_b, d_e] * l
        order = list(range(0, 2 * l, 2)) + list(range(1, 2 * l, 2))
        outs = []
        for s in sig:
            out = sum(k @ s @ k.conj().T for k in ks)
            outs.append(permute_subsystems(out, dims, order) if l > 1 else out)
        members.append(CqqBroadcastChannel(np.array(outs), (d_b ** l, d_e ** l)))
    return CompoundSet(tuple(members), {"kind": "full-quantum", "l": l})
