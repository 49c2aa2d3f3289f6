"""Posterior tables, expectation and variance of fixed-point random variables."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .bdd import FALSE, TRUE
from .fixedpoint import BitVectorDist


@dataclass
class PosteriorTable:
    entries: list[tuple[float, float]]
    normalization: float

    def as_dict(self) -> dict[float, float]:
        return dict(self.entries)

    def prob(self, value: float) -> float:
        return self.as_dict().get(value, 0.0)

    def total(self) -> float:
        return math.fsum(p for _, p in self.entries)

    def mean(self) -> float:
        return math.fsum(v * p for v, p in self.entries)

    def var(self) -> float:
        m = self.mean()
        return math.fsum((v - m) ** 2 * p for v, p in self.entries)

    def mass_between(self, lo: float, hi: float) -> float:
        return math.fsum(p for v, p in self.entries if lo <= v <= hi)


def _literal_var(store, node: int) -> tuple[int, bool] | None:
    if node < 2:
        return None
    if store.hi[node] == TRUE and store.lo[node] == FALSE:
        return store.var[node], True
    if store.hi[node] == FALSE and store.lo[node] == TRUE:
        return store.var[node], False
    return None


def _indicator_setup(ctx, root: int, bits):
    """Map each non-constant bit to a query variable.

    Bits that are single flips are queried directly. Any other bit q gets a
    weightless indicator y placed just below the deepest variable of q, and
    the root becomes evidence AND (y <-> q).
    """
    store = ctx.store
    level = store._level
    lits: dict[int, tuple[int, bool]] = {}
    weighted: set[int] = set()
    for i, b in enumerate(bits):
        if b < 2:
            continue
        lv = _literal_var(store, b)
        if lv is not None and lv[0] not in weighted:
            lits[i] = lv
            weighted.add(lv[0])
            continue
        deepest = max(store.support(b), key=lambda v: level[v])
        y = store.var_after(store.label(deepest), name=f"<ind{i}>")
        root = store.apply_and(root, store.apply_iff(store.literal(y), b))
        lits[i] = (y.id, True)
        if root == FALSE:
            break
    return root, lits, weighted


def _messages(ctx, root: int, bits):
    """Joint law of all bits in one bottom-up pass over the (augmented) evidence.

    Each diagram node carries a vector indexed by the values of the query
    variables at or below its level; skipped weighted query variables are
    expanded with their prior weights, skipped indicators with weight one.
    """
    store = ctx.store
    root, lits, weighted = _indicator_setup(ctx, root, bits)
    level = store._level
    qvars = sorted({v for v, _ in lits.values()}, key=lambda v: level[v])
    qlevels = [level[v] for v in qvars]
    pos = {v: k for k, v in enumerate(qvars)}
    K = len(qvars)
    theta = [ctx.weights.theta_by_id(v) if v in weighted else None for v in qvars]

    def start(n: int) -> int:
        if n < 2:
            return K
        return bisect.bisect_left(qlevels, level[store.var[n]])

    def lift(vec: np.ndarray, s_from: int, s_to: int) -> np.ndarray:
        for k in range(s_from - 1, s_to - 1, -1):
            t = theta[k]
            if t is None:
                vec = np.concatenate((vec, vec))
            else:
                vec = np.concatenate(((1.0 - t) * vec, t * vec))
        return vec

    memo: dict[int, np.ndarray] = {0: np.zeros(1), 1: np.ones(1)}
    stack = [root]
    weights = ctx.weights
    while stack:
        n = stack[-1]
        if n in memo:
            stack.pop()
            continue
        h, l = store.hi[n], store.lo[n]
        if h not in memo or l not in memo:
            if h not in memo:
                stack.append(h)
            if l not in memo:
                stack.append(l)
            continue
        stack.pop()
        v = store.var[n]
        if v in pos:
            p = pos[v]
            vh = lift(memo[h], start(h), p + 1)
            vl = lift(memo[l], start(l), p + 1)
            t = theta[p]
            if t is None:
                memo[n] = np.concatenate((vl, vh))
            else:
                memo[n] = np.concatenate(((1.0 - t) * vl, t * vh))
        else:
            t = weights.theta_by_id(v)
            s_n = start(n)
            memo[n] = t * lift(memo[h], start(h), s_n) + (1.0 - t) * lift(memo[l], start(l), s_n)
    vec = lift(memo[root], start(root), 0)
    nbits = len(bits)
    idx = np.arange(1 << K, dtype=np.int64)
    codes = np.zeros(1 << K, dtype=np.int64)
    for i, b in enumerate(bits):
        shift = nbits - 1 - i
        if b == TRUE:
            codes |= (1 << shift)
        elif b != FALSE:
            v, positive = lits[i]
            bit = (idx >> (K - 1 - pos[v])) & 1
            if not positive:
                bit = 1 - bit
            codes |= bit << shift
    return codes, vec


def _table_by_messages(dist: BitVectorDist, z: float):
    """Split on literal mixture guards, then one message pass per branch.

    With a guard fixed, the evidence is cofactored and only the chosen
    branch's bits remain, which are usually single flips.
    """
    ctx = dist.ctx
    store = ctx.store
    acc: dict[int, float] = {}

    def visit(d: BitVectorDist, root: int, assignment: dict[int, bool], w: float) -> None:
        if root == FALSE or w == 0.0:
            return
        if d.branches is not None:
            g = store.restrict(d.branches[0], assignment) if assignment else d.branches[0]
            if g < 2:
                visit(d.branches[1] if g == TRUE else d.branches[2], root, assignment, w)
                return
            lv = _literal_var(store, g)
            if lv is not None:
                v, positive = lv
                t = ctx.weights.theta_by_id(v)
                for val, p in ((True, t), (False, 1.0 - t)):
                    sub = dict(assignment)
                    sub[v] = val
                    branch = d.branches[1] if val == positive else d.branches[2]
                    visit(branch, store.restrict(root, {v: val}), sub, w * p)
                return
        bits = d.bits
        if assignment:
            bits = tuple(store.restrict(b, assignment) for b in bits)
        codes, vec = _messages(ctx, root, bits)
        for c, m in zip(codes.tolist(), vec.tolist()):
            if m != 0.0:
                acc[c] = acc.get(c, 0.0) + w * m

    visit(dist, ctx.evidence, {}, 1.0)
    codes = np.fromiter(acc.keys(), dtype=np.int64, count=len(acc))
    probs = np.fromiter(acc.values(), dtype=float, count=len(acc)) / z
    return codes, probs


def _table_by_descent(dist: BitVectorDist, z: float):
    """Depth-first over bit prefixes, dropping prefixes of exactly zero weight."""
    ctx = dist.ctx
    store = ctx.store
    bits = dist.bits
    n = len(bits)
    codes: list[int] = []
    probs: list[float] = []
    stack = [(0, ctx.evidence, 0)]
    while stack:
        i, f, code = stack.pop()
        if i == n:
            codes.append(code)
            probs.append(ctx.wmc(f) / z)
            continue
        b = bits[i]
        for val, g in ((1, b), (0, store.apply_not(b))):
            nf = store.apply_and(f, g)
            if nf == FALSE or ctx.wmc(nf) == 0.0:
                continue
            stack.append((i + 1, nf, (code << 1) | val))
    return np.array(codes, dtype=np.int64), np.array(probs)


def pr(dist: BitVectorDist, method: str = "auto") -> PosteriorTable:
    """Conditional probability of every value with nonzero mass.

    ``method="descent"`` walks bit prefixes and prunes zero-weight ones;
    the default computes the whole table in a single pass.
    """
    ctx = dist.ctx
    z = ctx._normalizer()
    ctx.query_count += 1
    if method in ("auto", "messages"):
        codes, probs = _table_by_messages(dist, z)
    elif method == "descent":
        codes, probs = _table_by_descent(dist, z)
    else:
        raise ValueError(f"unknown method {method!r}")
    fmt = dist.format
    acc: dict[int, float] = {}
    for c, p in zip(codes.tolist(), probs.tolist()):
        acc[c] = acc.get(c, 0.0) + p
    entries = sorted((fmt.value_of(c), p) for c, p in acc.items() if p != 0.0)
    return PosteriorTable(entries, z)


def bit_probabilities(dist: BitVectorDist) -> list[float]:
    ctx = dist.ctx
    return [ctx.probability(b) for b in dist.bits]


def expectation(dist: BitVectorDist) -> float:
    """Linear in the number of bits: one conditional query per bit."""
    fmt = dist.format
    ps = bit_probabilities(dist)
    return math.fsum(fmt.weight(i) * p for i, p in enumerate(ps))


def variance(dist: BitVectorDist) -> float:
    """Weighted sum of pairwise bit covariances; (n^2+n)/2 queries."""
    ctx = dist.ctx
    store = ctx.store
    fmt = dist.format
    bits = dist.bits
    n = len(bits)
    ps = [ctx.probability(b) for b in bits]
    terms = []
    for k in range(n):
        wk = fmt.weight(k)
        terms.append(wk * wk * (ps[k] - ps[k] * ps[k]))
        for l in range(k + 1, n):
            pkl = ctx.probability(store.apply_and(bits[k], bits[l]))
            terms.append(2.0 * wk * fmt.weight(l) * (pkl - ps[k] * ps[l]))
    return math.fsum(terms)
