"""Reduced ordered binary decision diagrams over a shared, hash-consed node store.

Nodes are plain integers. ``FALSE`` is 0 and ``TRUE`` is 1; every other id
indexes the parallel ``var``/``hi``/``lo`` arrays of the store. Variable
order is given by integer levels that can be inserted between existing
ones, so a new variable may be placed anywhere in the order after
diagrams over older variables already exist.
"""
from __future__ import annotations

import bisect
import sys
from typing import Iterable, Mapping

FALSE = 0
TRUE = 1

LEVEL_MAX = (1 << 63) - 1
_INITIAL_GAP = 1 << 32
_TERMINAL_LEVEL = 1 << 70

if sys.getrecursionlimit() < 20000:
    sys.setrecursionlimit(20000)


class LevelCollisionError(ValueError):
    pass


class MissingWeightError(KeyError):
    def __init__(self, label: "VarLabel"):
        super().__init__(f"no weight registered for variable {label.name}")
        self.label = label

    def __str__(self) -> str:
        return self.args[0]


class VarLabel:
    __slots__ = ("id", "name", "_store")

    def __init__(self, ident: int, name: str, store: "BDDStore"):
        self.id = ident
        self.name = name
        self._store = store

    @property
    def level(self) -> int:
        return self._store._level[self.id]

    def __repr__(self) -> str:
        return f"VarLabel({self.name}@{self.level})"


class BDDStore:
    """Shared node store with unique table and operation caches."""

    def __init__(self) -> None:
        self.var: list[int] = [-1, -1]
        self.hi: list[int] = [0, 1]
        self.lo: list[int] = [0, 1]
        self._unique: dict[tuple[int, int, int], int] = {}
        self._level: list[int] = []
        self._labels: list[VarLabel] = []
        # levels kept sorted for neighbour lookup on insertion
        self._sorted_levels: list[int] = []
        self._sorted_vars: list[int] = []
        self._and: dict[tuple[int, int], int] = {}
        self._or: dict[tuple[int, int], int] = {}
        self._xor: dict[tuple[int, int], int] = {}
        self._not: dict[int, int] = {}
        self._ite: dict[tuple[int, int, int], int] = {}
        self.renumber_count = 0

    # ---------------------------------------------------------------- variables
    @property
    def num_vars(self) -> int:
        return len(self._labels)

    def label(self, var_id: int) -> VarLabel:
        return self._labels[var_id]

    def labels_in_order(self) -> list[VarLabel]:
        return [self._labels[v] for v in self._sorted_vars]

    def _register(self, level: int, name: str | None) -> VarLabel:
        vid = len(self._labels)
        lab = VarLabel(vid, name if name is not None else f"v{vid}", self)
        self._labels.append(lab)
        self._level.append(level)
        pos = bisect.bisect_left(self._sorted_levels, level)
        self._sorted_levels.insert(pos, level)
        self._sorted_vars.insert(pos, vid)
        return lab

    def _renumber(self) -> None:
        n = len(self._sorted_vars)
        gap = min(_INITIAL_GAP, LEVEL_MAX // (n + 2))
        for i, v in enumerate(self._sorted_vars):
            self._level[v] = (i + 1) * gap
        self._sorted_levels = [(i + 1) * gap for i in range(n)]
        self.renumber_count += 1

    def fresh_var(self, level_hint: int | None = None, name: str | None = None) -> VarLabel:
        """New variable at ``level_hint`` or after every existing level."""
        if level_hint is None:
            if not self._sorted_levels:
                return self._register(0, name)
            last = self._sorted_levels[-1]
            if LEVEL_MAX - last < 2:
                self._renumber()
                last = self._sorted_levels[-1]
            return self._register(min(last + _INITIAL_GAP, (last + LEVEL_MAX) // 2 + 1), name)
        if not 0 <= level_hint <= LEVEL_MAX:
            raise ValueError("level hint out of range")
        pos = bisect.bisect_left(self._sorted_levels, level_hint)
        if pos < len(self._sorted_levels) and self._sorted_levels[pos] == level_hint:
            raise LevelCollisionError(f"level {level_hint} already taken")
        return self._register(level_hint, name)

    def var_after(self, anchor: VarLabel | None, name: str | None = None) -> VarLabel:
        """New variable immediately after ``anchor`` (or first in the order)."""
        if anchor is None:
            lo = -1
            hi = self._sorted_levels[0] if self._sorted_levels else LEVEL_MAX + 1
        else:
            lo = anchor.level
            pos = bisect.bisect_right(self._sorted_levels, lo)
            hi = self._sorted_levels[pos] if pos < len(self._sorted_levels) else LEVEL_MAX + 1
        if hi == LEVEL_MAX + 1 and anchor is not None and anchor.level == self._sorted_levels[-1]:
            return self.fresh_var(None, name)
        if hi - lo < 2:
            self._renumber()
            return self.var_after(anchor, name)
        return self._register((lo + hi) // 2, name)

    def var_before(self, anchor: VarLabel, name: str | None = None) -> VarLabel:
        pos = bisect.bisect_left(self._sorted_levels, anchor.level)
        if pos == 0:
            return self.var_after(None, name)
        return self.var_after(self._labels[self._sorted_vars[pos - 1]], name)

    # ------------------------------------------------------------------- nodes
    def _lvl(self, node: int) -> int:
        v = self.var[node]
        return _TERMINAL_LEVEL if v < 0 else self._level[v]

    def mk(self, v: int, hi: int, lo: int) -> int:
        if hi == lo:
            return hi
        key = (v, hi, lo)
        n = self._unique.get(key)
        if n is None:
            n = len(self.var)
            self.var.append(v)
            self.hi.append(hi)
            self.lo.append(lo)
            self._unique[key] = n
        return n

    def literal(self, label: VarLabel, positive: bool = True) -> int:
        return self.mk(label.id, TRUE, FALSE) if positive else self.mk(label.id, FALSE, TRUE)

    @property
    def size(self) -> int:
        return len(self.var) - 2

    # -------------------------------------------------------------- operations
    def apply_not(self, a: int) -> int:
        if a < 2:
            return 1 - a
        r = self._not.get(a)
        if r is None:
            r = self.mk(self.var[a], self.apply_not(self.hi[a]), self.apply_not(self.lo[a]))
            self._not[a] = r
            self._not[r] = a
        return r

    def apply_and(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        if a == 1 or a == b:
            return b
        if b == 1:
            return a
        if a > b:
            a, b = b, a
        key = (a, b)
        r = self._and.get(key)
        if r is not None:
            return r
        var, lev = self.var, self._level
        va, vb = var[a], var[b]
        la, lb = lev[va], lev[vb]
        if la == lb:
            r = self.mk(va, self.apply_and(self.hi[a], self.hi[b]), self.apply_and(self.lo[a], self.lo[b]))
        elif la < lb:
            r = self.mk(va, self.apply_and(self.hi[a], b), self.apply_and(self.lo[a], b))
        else:
            r = self.mk(vb, self.apply_and(a, self.hi[b]), self.apply_and(a, self.lo[b]))
        self._and[key] = r
        return r

    def apply_or(self, a: int, b: int) -> int:
        if a == 1 or b == 1:
            return 1
        if a == 0 or a == b:
            return b
        if b == 0:
            return a
        if a > b:
            a, b = b, a
        key = (a, b)
        r = self._or.get(key)
        if r is not None:
            return r
        var, lev = self.var, self._level
        va, vb = var[a], var[b]
        la, lb = lev[va], lev[vb]
        if la == lb:
            r = self.mk(va, self.apply_or(self.hi[a], self.hi[b]), self.apply_or(self.lo[a], self.lo[b]))
        elif la < lb:
            r = self.mk(va, self.apply_or(self.hi[a], b), self.apply_or(self.lo[a], b))
        else:
            r = self.mk(vb, self.apply_or(a, self.hi[b]), self.apply_or(a, self.lo[b]))
        self._or[key] = r
        return r

    def apply_xor(self, a: int, b: int) -> int:
        if a == b:
            return 0
        if a == 0:
            return b
        if b == 0:
            return a
        if a == 1:
            return self.apply_not(b)
        if b == 1:
            return self.apply_not(a)
        if a > b:
            a, b = b, a
        key = (a, b)
        r = self._xor.get(key)
        if r is not None:
            return r
        var, lev = self.var, self._level
        va, vb = var[a], var[b]
        la, lb = lev[va], lev[vb]
        if la == lb:
            r = self.mk(va, self.apply_xor(self.hi[a], self.hi[b]), self.apply_xor(self.lo[a], self.lo[b]))
        elif la < lb:
            r = self.mk(va, self.apply_xor(self.hi[a], b), self.apply_xor(self.lo[a], b))
        else:
            r = self.mk(vb, self.apply_xor(a, self.hi[b]), self.apply_xor(a, self.lo[b]))
        self._xor[key] = r
        return r

    def apply_iff(self, a: int, b: int) -> int:
        return self.apply_not(self.apply_xor(a, b))

    def apply_ite(self, f: int, g: int, h: int) -> int:
        if f == 1:
            return g
        if f == 0:
            return h
        if g == h:
            return g
        if g == 1 and h == 0:
            return f
        if g == 0 and h == 1:
            return self.apply_not(f)
        if g == 1:
            return self.apply_or(f, h)
        if h == 0:
            return self.apply_and(f, g)
        key = (f, g, h)
        r = self._ite.get(key)
        if r is not None:
            return r
        lf, lg, lh = self._lvl(f), self._lvl(g), self._lvl(h)
        top = min(lf, lg, lh)
        if lf == top:
            v = self.var[f]
        elif lg == top:
            v = self.var[g]
        else:
            v = self.var[h]
        f1, f0 = (self.hi[f], self.lo[f]) if lf == top else (f, f)
        g1, g0 = (self.hi[g], self.lo[g]) if lg == top else (g, g)
        h1, h0 = (self.hi[h], self.lo[h]) if lh == top else (h, h)
        r = self.mk(v, self.apply_ite(f1, g1, h1), self.apply_ite(f0, g0, h0))
        self._ite[key] = r
        return r

    def and_all(self, nodes: Iterable[int]) -> int:
        acc = TRUE
        for n in nodes:
            acc = self.apply_and(acc, n)
            if acc == FALSE:
                break
        return acc

    def or_all(self, nodes: Iterable[int]) -> int:
        acc = FALSE
        for n in nodes:
            acc = self.apply_or(acc, n)
            if acc == TRUE:
                break
        return acc

    def restrict(self, node: int, assignment: Mapping[int, bool]) -> int:
        """Cofactor ``node`` by a partial assignment keyed on variable id."""
        memo: dict[int, int] = {}

        def go(n: int) -> int:
            if n < 2:
                return n
            r = memo.get(n)
            if r is None:
                v = self.var[n]
                if v in assignment:
                    r = go(self.hi[n] if assignment[v] else self.lo[n])
                else:
                    r = self.mk(v, go(self.hi[n]), go(self.lo[n]))
                memo[n] = r
            return r

        return go(node)

    def support(self, node: int) -> set[int]:
        seen: set[int] = set()
        out: set[int] = set()
        stack = [node]
        while stack:
            n = stack.pop()
            if n < 2 or n in seen:
                continue
            seen.add(n)
            out.add(self.var[n])
            stack.append(self.hi[n])
            stack.append(self.lo[n])
        return out

    def evaluate(self, node: int, assignment: Mapping[int, bool]) -> bool:
        while node >= 2:
            node = self.hi[node] if assignment[self.var[node]] else self.lo[node]
        return node == TRUE

    def clear_caches(self) -> None:
        self._and.clear()
        self._or.clear()
        self._xor.clear()
        self._ite.clear()

    def check_invariants(self, roots: Iterable[int]) -> None:
        """Assert reducedness and order along every edge reachable from roots."""
        seen: set[int] = set()
        stack = list(roots)
        while stack:
            n = stack.pop()
            if n < 2 or n in seen:
                continue
            seen.add(n)
            h, l = self.hi[n], self.lo[n]
            assert h != l, "unreduced node"
            lv = self._lvl(n)
            assert self._lvl(h) > lv and self._lvl(l) > lv, "order violated"
            assert self._unique[(self.var[n], h, l)] == n, "duplicate node"
            stack.append(h)
            stack.append(l)


class WeightMap:
    """Per-variable true-probabilities with a memoized model counter.

    The memo is keyed by node id and dropped whenever a weight that was
    already registered changes, so repeated queries over shared sub-diagrams
    cost nothing after the first visit.
    """

    def __init__(self, store: BDDStore) -> None:
        self.store = store
        self._theta: dict[int, float] = {}
        self.epoch = 0
        self._memo: dict[int, float] = {}

    def __setitem__(self, label: VarLabel, theta: float) -> None:
        theta = float(theta)
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f"weight {theta} for {label.name} outside [0, 1]")
        old = self._theta.get(label.id)
        self._theta[label.id] = theta
        if old is not None and old != theta:
            self.epoch += 1
            self._memo = {}

    def __getitem__(self, label: VarLabel) -> float:
        try:
            return self._theta[label.id]
        except KeyError:
            raise MissingWeightError(label) from None

    def __contains__(self, label: VarLabel) -> bool:
        return label.id in self._theta

    def theta_by_id(self, var_id: int) -> float:
        try:
            return self._theta[var_id]
        except KeyError:
            raise MissingWeightError(self.store.label(var_id)) from None

    def __len__(self) -> int:
        return len(self._theta)


def wmc(node: int, weights: WeightMap) -> float:
    """Weighted model count; every node is visited at most once per epoch."""
    if node < 2:
        return float(node)
    store = weights.store
    memo = weights._memo
    theta = weights._theta
    var, hi, lo = store.var, store.hi, store.lo
    memo[0] = 0.0
    memo[1] = 1.0
    r = memo.get(node)
    if r is not None:
        return r
    # explicit post-order so very tall diagrams do not hit the recursion limit
    stack = [node]
    while stack:
        n = stack[-1]
        if n in memo:
            stack.pop()
            continue
        h, l = hi[n], lo[n]
        mh = memo.get(h)
        ml = memo.get(l)
        if mh is None:
            stack.append(h)
        if ml is None:
            stack.append(l)
        if mh is None or ml is None:
            continue
        stack.pop()
        t = theta.get(var[n])
        if t is None:
            raise MissingWeightError(store.label(var[n]))
        memo[n] = t * mh + (1.0 - t) * ml
    return memo[node]


def node_count(store: BDDStore, roots: Iterable[int]) -> int:
    """Distinct internal nodes reachable from ``roots``; terminals excluded."""
    seen: set[int] = set()
    stack = [r for r in roots if r >= 2]
    hi, lo = store.hi, store.lo
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        h, l = hi[n], lo[n]
        if h >= 2 and h not in seen:
            stack.append(h)
        if l >= 2 and l not in seen:
            stack.append(l)
    return len(seen)


def to_dot(store: BDDStore, roots: Mapping[str, int] | Iterable[int],
           weights: WeightMap | None = None) -> str:
    """Graphviz text for the diagrams rooted at ``roots``."""
    if isinstance(roots, Mapping):
        named = list(roots.items())
    else:
        named = [(f"r{i}", r) for i, r in enumerate(roots)]
    lines = ["digraph bdd {", '  node [shape=circle];',
             '  t0 [label="0", shape=box];', '  t1 [label="1", shape=box];']
    seen: set[int] = set()
    stack = [r for _, r in named]

    def ref(n: int) -> str:
        return f"t{n}" if n < 2 else f"n{n}"

    while stack:
        n = stack.pop()
        if n < 2 or n in seen:
            continue
        seen.add(n)
        lab = store.label(store.var[n])
        text = lab.name
        if weights is not None and lab in weights:
            text += f"\\n{weights[lab]:.3g}"
        lines.append(f'  n{n} [label="{text}"];')
        lines.append(f"  n{n} -> {ref(store.hi[n])};")
        lines.append(f"  n{n} -> {ref(store.lo[n])} [style=dashed];")
        stack.append(store.hi[n])
        stack.append(store.lo[n])
    for name, r in named:
        lines.append(f'  "{name}" [shape=plaintext];')
        lines.append(f'  "{name}" -> {ref(r)};')
    lines.append("}")
    return "\n".join(lines) + "\n"
