"""
Minimum-weight perfect matching decoder.

Detection events live on the check graph of one stabilizer type (Z checks see
X errors and fix logical bit 0, X checks see Z errors and fix bit 1).  Weights
are kept in half units so they stay integral: a space-time pair costs
``2·L + |dt|`` where ``L`` is the lattice distance between the two checks, and
matching an event to the boundary costs ``2·b``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import networkx as nx
import numpy as np
import pymatching

from .code import SurfaceCode

KINDS = ("Z", "X")  # Z checks -> logical bit 0, X checks -> logical bit 1


@dataclass(frozen=True, order=True)
class DetectionEvent:
    round: int
    ancilla: int  # stabilizer index
    position: tuple[int, int] = (0, 0)


def detection_events(code: SurfaceCode, records, final_perfect) -> dict[str, list[DetectionEvent]]:
    """Events ``m_t XOR m_{t-1}`` (with ``m_0 = 0``) plus those of the perfect final readout.

    ``records`` is a sequence of measured syndromes (rounds 1..T); the perfect
    readout counts as round ``T + 1``.
    """
    rows = [np.zeros(code.n_a, np.uint8)] + [np.asarray(m, np.uint8) for m in records]
    rows.append(np.asarray(final_perfect, np.uint8))
    out: dict[str, list[DetectionEvent]] = {k: [] for k in KINDS}
    for t in range(1, len(rows)):
        for i in np.flatnonzero(rows[t] ^ rows[t - 1]):
            s = code.stabilizers[i]
            out[s.kind].append(DetectionEvent(t, int(i), s.position))
    return out


class LatticeMetric:
    """All-pairs lattice distances and correction parities for one check type."""

    def __init__(self, code: SurfaceCode, kind: str):
        graph = code.check_graphs[kind]
        self.kind = kind
        self.stabilizers = graph.stabilizers
        self.local = {s: i for i, s in enumerate(graph.stabilizers)}
        support = code.logical_z.z if kind == "Z" else code.logical_x.x
        crossing = set(np.flatnonzero(support).tolist())
        adj = graph.adjacency()
        k = len(graph.stabilizers)
        INF = 10 ** 6
        self.dist = np.full((k, k), INF, np.int64)
        self.parity = np.zeros((k, k), np.uint8)
        self.bdist = np.full(k, INF, np.int64)
        self.bparity = np.zeros(k, np.uint8)
        for s in range(k):
            seen = {s: (0, 0)}
            queue = deque([s])
            while queue:
                u = queue.popleft()
                du, pu = seen[u]
                for v, q in adj[u]:
                    pv = pu ^ (q in crossing)
                    if v == -1:
                        if du + 1 < self.bdist[s]:
                            self.bdist[s], self.bparity[s] = du + 1, pv
                        continue
                    if v not in seen:
                        seen[v] = (du + 1, pv)
                        queue.append(v)
            for v, (dv, pv) in seen.items():
                self.dist[s, v], self.parity[s, v] = dv, pv
        # half-unit weights
        self.w_pair = 2 * self.dist
        self.w_bound = 2 * self.bdist
        # an event can only share a usable ("short") edge with a later event
        # when their time gap is at most its slack
        self.slack = self.w_bound + (self.w_bound[None, :] - self.w_pair).max(axis=1)


class LatticeMatcher:
    """Sparse space-time lattice of one check type for fast matching of many events.

    Spatial steps cost ``2K``, time steps ``K`` and boundary steps ``2K + 1``
    (``K = TIE_SCALE``), so shortest paths reproduce the half-unit weights and
    the extra unit per boundary match breaks ties toward pairing.
    """

    TIE_SCALE = 1024

    def __init__(self, code: SurfaceCode, kind: str, rounds: int = 32):
        self.code = code
        self.kind = kind
        self.graph = code.check_graphs[kind]
        support = code.logical_z.z if kind == "Z" else code.logical_x.x
        self.crossing = set(np.flatnonzero(support).tolist())
        self.k = len(self.graph.stabilizers)
        self._build(rounds)

    def _build(self, rounds: int) -> None:
        K = self.TIE_SCALE
        k = self.k
        m = pymatching.Matching()
        for r in range(rounds):
            base = r * k
            for i, j, q in self.graph.edges:
                m.add_edge(base + i, base + j, fault_ids={0} if q in self.crossing else set(), weight=2 * K,
                           merge_strategy="smallest-weight")
            for i, q in self.graph.boundary:
                m.add_boundary_edge(base + i, fault_ids={0} if q in self.crossing else set(), weight=2 * K + 1,
                                    merge_strategy="smallest-weight")
            if r + 1 < rounds:
                for i in range(k):
                    m.add_edge(base + i, base + k + i, weight=K)
        self.rounds = rounds
        self.matching = m

    def parity(self, rounds: np.ndarray, anc: np.ndarray) -> int:
        """Logical parity of an optimal matching of events at ``(rounds, local ancilla)``."""
        if rounds.size == 0:
            return 0
        r0 = int(rounds.min())
        span = int(rounds.max()) - r0 + 1
        if span > self.rounds:
            self._build(max(span, 2 * self.rounds))
        syn = np.zeros(self.rounds * self.k, np.uint8)
        np.bitwise_xor.at(syn, (rounds - r0) * self.k + anc, 1)
        return int(self.matching.decode(syn)[0])


@dataclass
class DecodingGraph:
    """Events of one check type with integral half-unit weights.

    Vertices ``0..N-1`` are events and ``N..2N-1`` their boundary companions.
    """

    kind: str
    events: list[DetectionEvent]
    pair_weight: np.ndarray  # (N, N)
    boundary_weight: np.ndarray  # (N,)
    pair_parity: np.ndarray
    boundary_parity: np.ndarray

    @property
    def n_events(self) -> int:
        return len(self.boundary_weight)

    def edges(self) -> list[tuple[int, int, int]]:
        N = self.n_events
        out = [(i, j, int(self.pair_weight[i, j])) for i in range(N) for j in range(i + 1, N)]
        out += [(i, N + i, int(self.boundary_weight[i])) for i in range(N)]
        out += [(N + i, N + j, 0) for i in range(N) for j in range(i + 1, N)]
        return out


def build_graph(metric: LatticeMetric, events: list[DetectionEvent]) -> DecodingGraph:
    events = sorted(events)
    a = np.array([metric.local[e.ancilla] for e in events], np.intp)
    r = np.array([e.round for e in events], np.int64)
    pw = metric.w_pair[np.ix_(a, a)] + np.abs(r[:, None] - r[None, :])
    return DecodingGraph(metric.kind, events, pw, metric.w_bound[a], metric.parity[np.ix_(a, a)], metric.bparity[a])


def min_weight_perfect_matching(n_vertices: int, edges) -> tuple[list[tuple[int, int]], int]:
    """Minimum-weight perfect matching of a general graph with non-negative integer weights.

    Returns ``(pairs, total weight)``; raises ``ValueError`` when no perfect
    matching exists.  Uses Edmonds' blossom algorithm on complemented weights
    with maximum cardinality enforced.
    """
    if n_vertices % 2:
        raise ValueError("a perfect matching needs an even number of vertices")
    edges = [(int(u), int(v), int(w)) for u, v, w in edges]
    if n_vertices == 0:
        return [], 0
    top = max((w for *_, w in edges), default=0) + 1
    g = nx.Graph()
    g.add_nodes_from(range(n_vertices))
    weight = {}
    for u, v, w in edges:
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key not in weight or w < weight[key]:
            weight[key] = w
    for (u, v), w in sorted(weight.items()):
        g.add_edge(u, v, weight=top - w)
    mate = nx.max_weight_matching(g, maxcardinality=True)
    if 2 * len(mate) != n_vertices:
        raise ValueError("graph has no perfect matching")
    pairs = sorted((min(u, v), max(u, v)) for u, v in mate)
    return pairs, sum(weight[p] for p in pairs)


def _small_match(pw: np.ndarray, bw: np.ndarray) -> list[tuple[int, int | None]]:
    """Exact boundary-aware matching for a handful of events by subset recursion.

    Minimises ``(weight, number of boundary matches)`` lexicographically.
    """
    n = len(bw)
    best: dict[int, tuple[tuple[int, int], tuple]] = {0: ((0, 0), ())}

    def solve(mask: int):
        if mask in best:
            return best[mask]
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        (w, nb), p = solve(rest)
        out = ((w + int(bw[i]), nb + 1), ((i, None),) + p)
        for j in range(i + 1, n):
            if rest >> j & 1:
                (w, nb), p = solve(rest & ~(1 << j))
                cand = (w + int(pw[i, j]), nb)
                if cand < out[0]:
                    out = (cand, ((i, j),) + p)
        best[mask] = out
        return out

    return list(solve((1 << n) - 1)[1])


SMALL = 10


def match_events(graph: DecodingGraph) -> list[tuple[int, int | None]]:
    """Matched pairs ``(i, j)`` of events, with ``j = None`` for the boundary."""
    N = graph.n_events
    if N == 0:
        return []
    if N <= SMALL:
        return _small_match(graph.pair_weight, graph.boundary_weight)
    # scale so that one extra boundary match only breaks ties
    scale = 2 * N + 1
    edges = [(u, v, w * scale + (v == u + N)) for u, v, w in graph.edges()]
    pairs, _ = min_weight_perfect_matching(2 * N, edges)
    out = []
    for u, v in pairs:
        if u < N and v < N:
            out.append((u, v))
        elif u < N:
            out.append((u, None))
    return out


def matching_weight(graph: DecodingGraph, matching) -> int:
    return sum(int(graph.boundary_weight[i]) if j is None else int(graph.pair_weight[i, j]) for i, j in matching)


def predict_logical(matching, graph: DecodingGraph) -> int:
    """Parity of logical crossings of the correction chains (one bit of the logical class)."""
    bit = 0
    for i, j in matching:
        bit ^= int(graph.boundary_parity[i] if j is None else graph.pair_parity[i, j])
    return bit


def decode_history(code: SurfaceCode, records, final_perfect, metrics: dict | None = None) -> int:
    """Reference decoder: match the whole history at once; returns the logical class."""
    metrics = metrics or {k: LatticeMetric(code, k) for k in KINDS}
    events = detection_events(code, records, final_perfect)
    lam = 0
    for bit, kind in enumerate(KINDS):
        g = build_graph(metrics[kind], events[kind])
        lam |= predict_logical(match_events(g), g) << bit
    return lam


class _Track:
    """Per-run, per-type open events (not yet settled)."""

    __slots__ = ("parity", "rounds", "anc")

    def __init__(self):
        self.parity = 0  # parity of components settled since the last sync
        self.rounds: list[int] = []
        self.anc: list[int] = []


class MWPMDecoder:
    """Matching decoder queried after every round.

    ``backend="exact"`` re-matches the full history each cycle.
    ``backend="incremental"`` gives the same optimum without the quadratic
    cost.  Matchings are ranked by weight, then by the number of boundary
    matches, so an edge dearer than sending both ends to the boundary is never
    used; the matching splits into components of the remaining "short" edges,
    and a component whose events are too old to reach any future event is
    settled once and only its parity is kept.
    """

    name = "mwpm"

    def __init__(self, code: SurfaceCode, backend: str = "incremental"):
        if backend not in ("incremental", "exact"):
            raise ValueError(f"unknown MWPM backend {backend!r}")
        self.code = code
        self.backend = backend
        self.metrics = {k: LatticeMetric(code, k) for k in KINDS}
        self.lattice = {k: LatticeMatcher(code, k) for k in KINDS}
        self.kind_idx = {k: code.indices(k) for k in KINDS}
        self.reset(1)

    def reset(self, batch: int) -> None:
        self.t = 0
        self.prev = np.zeros((batch, self.code.n_a), np.uint8)
        self.records: list[list[np.ndarray]] = [[] for _ in range(batch)]
        self.tracks = [{k: _Track() for k in KINDS} for _ in range(batch)]
        self.open = np.zeros((batch, len(KINDS)), bool)
        self.settled = np.zeros((batch, len(KINDS)), np.int64)

    def keep(self, mask: np.ndarray) -> None:
        idx = np.flatnonzero(mask)
        self.prev = self.prev[idx]
        self.records = [self.records[i] for i in idx]
        self.tracks = [self.tracks[i] for i in idx]
        self.open = self.open[idx]
        self.settled = self.settled[idx]

    def observe(self, m: np.ndarray) -> None:
        m = np.atleast_2d(np.asarray(m, np.uint8))
        self.t += 1
        if self.backend == "exact":
            for b in range(m.shape[0]):
                self.records[b].append(m[b].copy())
            self.prev = m.copy()
            return
        diff = m ^ self.prev
        self.prev = m.copy()
        for c, kind in enumerate(KINDS):
            idx = self.kind_idx[kind]
            sub = diff[:, idx]
            for b in np.flatnonzero(sub.any(axis=1)):
                tr = self.tracks[b][kind]
                for a in np.flatnonzero(sub[b]):
                    tr.rounds.append(self.t)
                    tr.anc.append(int(a))
                self.open[b, c] = True

    def predict(self, sigma_star: np.ndarray) -> np.ndarray:
        sigma_star = np.atleast_2d(np.asarray(sigma_star, np.uint8))
        B = sigma_star.shape[0]
        if self.backend == "exact":
            return np.array([decode_history(self.code, self.records[b], sigma_star[b], self.metrics)
                             for b in range(B)], np.int64)
        virt = sigma_star ^ self.prev
        lam = np.zeros(B, np.int64)
        for c, kind in enumerate(KINDS):
            v = virt[:, self.kind_idx[kind]]
            bits = self.settled[:, c].copy()
            for b in np.flatnonzero(self.open[:, c] | v.any(axis=1)):
                tr = self.tracks[b][kind]
                bits[b] ^= self._solve_open(tr, np.flatnonzero(v[b]), kind)
                self.settled[b, c] ^= tr.parity
                bits[b] ^= tr.parity
                tr.parity = 0
                if not tr.rounds:
                    self.open[b, c] = False
            lam |= bits << c
        return lam

    def _solve_open(self, tr: _Track, virtual: np.ndarray, kind: str) -> int:
        """Parity of the open events plus the virtual final round.

        First settles history components that can no longer gain a short edge
        to any event at round ``t + 1`` or later (that includes this query's
        virtual events).
        """
        met = self.metrics[kind]
        t_next = self.t + 1
        if tr.rounds:
            rounds = np.array(tr.rounds, np.int64)
            anc = np.array(tr.anc, np.intp)
            short = _short_edges(met, rounds, anc)
            aged = (t_next - rounds) > met.slack[anc]
            drop = np.zeros(rounds.size, bool)
            for members in _components(short):
                if aged[members].all():
                    tr.parity ^= self._parity(kind, rounds[members], anc[members])
                    drop[members] = True
            if drop.any():
                keep = np.flatnonzero(~drop)
                tr.rounds = [tr.rounds[i] for i in keep]
                tr.anc = [tr.anc[i] for i in keep]
        rounds = np.array(tr.rounds + [t_next] * len(virtual), np.int64)
        anc = np.array(tr.anc + virtual.tolist(), np.intp)
        if rounds.size > SMALL:
            return self._parity(kind, rounds, anc)
        bit = 0
        for members in _components(_short_edges(met, rounds, anc)):
            bit ^= self._parity(kind, rounds[members], anc[members])
        return bit

    def _parity(self, kind: str, rounds: np.ndarray, anc: np.ndarray) -> int:
        """Correction parity of an optimal matching of the given events."""
        met = self.metrics[kind]
        n = rounds.size
        if n == 0:
            return 0
        if n == 1:
            return int(met.bparity[anc[0]])
        if n > SMALL:
            return self.lattice[kind].parity(rounds, anc)
        pw = met.w_pair[np.ix_(anc, anc)] + np.abs(rounds[:, None] - rounds[None, :])
        bw = met.w_bound[anc]
        if n == 2:
            if pw[0, 1] <= bw[0] + bw[1]:
                return int(met.parity[anc[0], anc[1]])
            return int(met.bparity[anc[0]] ^ met.bparity[anc[1]])
        bit = 0
        for i, j in _small_match(pw, bw):
            bit ^= int(met.bparity[anc[i]] if j is None else met.parity[anc[i], anc[j]])
        return bit


def _short_edges(met: LatticeMetric, rounds: np.ndarray, anc: np.ndarray) -> np.ndarray:
    pw = met.w_pair[np.ix_(anc, anc)] + np.abs(rounds[:, None] - rounds[None, :])
    bw = met.w_bound[anc]
    short = pw <= bw[:, None] + bw[None, :]
    np.fill_diagonal(short, False)
    return short


def _components(adj: np.ndarray) -> list[list[int]]:
    n = adj.shape[0]
    seen = np.zeros(n, bool)
    out = []
    for s in range(n):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in np.flatnonzero(adj[u] & ~seen):
                seen[v] = True
                stack.append(v)
        out.append(sorted(comp))
    return out
