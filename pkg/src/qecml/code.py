"""
Rotated surface code layout, syndromes and coset labels.

Geometry uses doubled integer coordinates: data qubit ``(r, c)`` sits at
``(2r, 2c)`` and the plaquette with upper-left data qubit ``(r, c)`` is centred
at ``(2r+1, 2c+1)``.  Plaquettes follow a checkerboard, X-type where ``r+c`` is
even.  Weight-2 Z checks live on the top and bottom edges and weight-2 X checks
on the left and right edges, so logical X runs along a row and logical Z down a
column.

Register convention: data qubits are ``0..n-1`` (row-major), ancilla of
stabilizer ``i`` is ``n + i``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .pauli import PauliString, commutes

CORNERS = {"NW": (-1, -1), "NE": (-1, 1), "SW": (1, -1), "SE": (1, 1)}


@dataclass(frozen=True)
class Stabilizer:
    index: int
    kind: str  # "X" or "Z"
    support: tuple[int, ...]
    position: tuple[int, int]
    corners: dict = field(compare=False, hash=False)  # corner name -> data qubit or None


@dataclass(frozen=True)
class CosetLabel:
    """Ideal syndrome plus logical class.

    ``lam`` bit 0 is set when the error anticommutes with logical Z (an X-type
    logical component), bit 1 when it anticommutes with logical X.
    """

    sigma: tuple[int, ...]
    lam: int

    def __xor__(self, other: CosetLabel) -> CosetLabel:
        if len(self.sigma) != len(other.sigma):
            raise ValueError("labels of different codes")
        return CosetLabel(tuple(a ^ b for a, b in zip(self.sigma, other.sigma)), self.lam ^ other.lam)

    def is_trivial(self) -> bool:
        return self.lam == 0 and not any(self.sigma)


@dataclass(frozen=True)
class CheckGraph:
    """Checks of one type linked by the data qubits they share.

    ``edges`` holds ``(i, j, qubit)`` for checks ``i < j`` (local indices) sharing
    ``qubit``; ``boundary`` holds ``(i, qubit)`` for qubits covered by a single
    check of this type.
    """

    kind: str
    stabilizers: tuple[int, ...]
    edges: tuple[tuple[int, int, int], ...]
    boundary: tuple[tuple[int, int], ...]

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Neighbour lists ``(node, qubit)``; node ``-1`` is the boundary."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.stabilizers]
        for i, j, q in self.edges:
            adj[i].append((j, q))
            adj[j].append((i, q))
        for i, q in self.boundary:
            adj[i].append((-1, q))
        for nbrs in adj:
            nbrs.sort(key=lambda t: (t[1], t[0]))
        return adj

    def path_to(self, start: int, goal: int | None) -> list[int]:
        """Data qubits along a shortest path from check ``start`` to ``goal``
        (a local index, or ``None`` for the boundary)."""
        target = -1 if goal is None else goal
        if start == target:
            return []
        adj = self.adjacency()
        prev: dict[int, tuple[int, int]] = {start: (start, -1)}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v, q in adj[u]:
                if v in prev:
                    continue
                prev[v] = (u, q)
                if v == target:
                    path = []
                    while v != start:
                        v, q = prev[v]
                        path.append(q)
                    return path[::-1]
                if v != -1:
                    queue.append(v)
        raise ValueError(f"no path from check {start} to {goal}")


class SurfaceCode:
    """Distance-``d`` rotated surface code with one logical qubit."""

    def __init__(self, distance: int):
        if distance < 2:
            raise ValueError(f"distance must be >= 2, got {distance}")
        d = self.distance = int(distance)
        self.n = d * d
        self.data_positions = tuple((2 * r, 2 * c) for r in range(d) for c in range(d))

        stabs = []
        for r in range(-1, d):
            for c in range(-1, d):
                kind = "X" if (r + c) % 2 == 0 else "Z"
                bulk = 0 <= r < d - 1 and 0 <= c < d - 1
                top_bottom = (r in (-1, d - 1)) and 0 <= c < d - 1
                left_right = (c in (-1, d - 1)) and 0 <= r < d - 1
                if not (bulk or (top_bottom and kind == "Z") or (left_right and kind == "X")):
                    continue
                corners = {}
                for name, (dr, dc) in CORNERS.items():
                    qr, qc = r + (dr + 1) // 2, c + (dc + 1) // 2
                    corners[name] = qr * d + qc if 0 <= qr < d and 0 <= qc < d else None
                support = tuple(sorted(q for q in corners.values() if q is not None))
                stabs.append((kind, support, (2 * r + 1, 2 * c + 1), corners))
        self.stabilizers = tuple(
            Stabilizer(i, kind, support, pos, corners) for i, (kind, support, pos, corners) in enumerate(stabs)
        )
        self.n_a = len(self.stabilizers)

        self.sx = np.zeros((self.n_a, self.n), dtype=np.uint8)  # x bits of each generator
        self.sz = np.zeros((self.n_a, self.n), dtype=np.uint8)
        for s in self.stabilizers:
            (self.sx if s.kind == "X" else self.sz)[s.index, list(s.support)] = 1

        self.logical_x = PauliString.from_sparse(self.n, {c: "X" for c in range(d)})
        self.logical_z = PauliString.from_sparse(self.n, {r * d: "Z" for r in range(d)})
        self._lz_support = self.logical_z.z.astype(np.uint8)
        self._lx_support = self.logical_x.x.astype(np.uint8)

        self.x_indices = np.array([s.index for s in self.stabilizers if s.kind == "X"], dtype=np.intp)
        self.z_indices = np.array([s.index for s in self.stabilizers if s.kind == "Z"], dtype=np.intp)
        self.destabilizers = tuple(self._destabilizer(s) for s in self.stabilizers)

    def __repr__(self) -> str:
        return f"SurfaceCode(distance={self.distance})"

    @property
    def n_qubits(self) -> int:
        return self.n + self.n_a

    def ancilla(self, stabilizer: int) -> int:
        return self.n + stabilizer

    def stabilizer_pauli(self, i: int) -> PauliString:
        s = self.stabilizers[i]
        return PauliString.from_sparse(self.n, {q: s.kind for q in s.support})

    def indices(self, kind: str) -> np.ndarray:
        return self.x_indices if kind == "X" else self.z_indices

    @cached_property
    def check_graphs(self) -> dict[str, CheckGraph]:
        return {kind: self._check_graph(kind) for kind in ("X", "Z")}

    def _check_graph(self, kind: str) -> CheckGraph:
        idx = self.indices(kind).tolist()
        local = {s: i for i, s in enumerate(idx)}
        owners: dict[int, list[int]] = {}
        for s in idx:
            for q in self.stabilizers[s].support:
                owners.setdefault(q, []).append(local[s])
        edges, boundary = [], []
        for q in sorted(owners):
            own = owners[q]
            if len(own) == 1:
                boundary.append((own[0], q))
            else:
                i, j = sorted(own)
                edges.append((i, j, q))
        return CheckGraph(kind, tuple(idx), tuple(edges), tuple(boundary))

    def _destabilizer(self, s: Stabilizer) -> PauliString:
        # X errors are seen by Z checks and vice versa.
        graph = self._check_graph(s.kind)
        start = int(np.flatnonzero(np.asarray(graph.stabilizers) == s.index)[0])
        letter = "X" if s.kind == "Z" else "Z"
        p = PauliString.from_sparse(self.n, {q: letter for q in graph.path_to(start, None)})
        if not commutes(p, self.logical_z):
            p = p * self.logical_x
        if not commutes(p, self.logical_x):
            p = p * self.logical_z
        return p

    # -- syndromes and labels ---------------------------------------------

    def syndromes(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Vectorised ideal syndromes for error bit arrays of shape ``(..., n)``."""
        x = np.asarray(x, dtype=np.uint8)[..., : self.n]
        z = np.asarray(z, dtype=np.uint8)[..., : self.n]
        return ((x @ self.sz.T + z @ self.sx.T) & 1).astype(np.uint8)

    def logical_classes(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Vectorised logical class ``lam`` (see :class:`CosetLabel`)."""
        x = np.asarray(x, dtype=np.uint8)[..., : self.n]
        z = np.asarray(z, dtype=np.uint8)[..., : self.n]
        return ((x @ self._lz_support) & 1) | (((z @ self._lx_support) & 1) << 1)

    def pure_error(self, sigma) -> PauliString:
        """Fixed representative with ideal syndrome ``sigma`` and trivial logical class.

        Representatives are products of per-generator destabilizers, so the map is
        linear in ``sigma``.
        """
        sigma = np.asarray(sigma, dtype=bool)
        if sigma.shape != (self.n_a,):
            raise ValueError(f"syndrome must have length {self.n_a}")
        x = np.zeros(self.n, bool)
        z = np.zeros(self.n, bool)
        for i in np.flatnonzero(sigma):
            x ^= self.destabilizers[i].x
            z ^= self.destabilizers[i].z
        return PauliString(x, z)

    def pure_error_table(self) -> dict[tuple[int, ...], PauliString]:
        """Every reachable syndrome mapped to its representative (small codes only)."""
        if self.n_a > 16:
            raise ValueError("pure error table is only materialised for n_a <= 16; use pure_error()")
        table = {}
        for k in range(1 << self.n_a):
            sigma = tuple((k >> i) & 1 for i in range(self.n_a))
            table[sigma] = self.pure_error(sigma)
        return table


def build_rotated_code(distance: int) -> SurfaceCode:
    return SurfaceCode(distance)


def _data_part(code: SurfaceCode, e: PauliString) -> tuple[np.ndarray, np.ndarray]:
    if e.n not in (code.n, code.n_qubits):
        raise ValueError(f"error acts on {e.n} qubits, expected {code.n} or {code.n_qubits}")
    return e.x[: code.n], e.z[: code.n]


def syndrome_of(code: SurfaceCode, e: PauliString) -> np.ndarray:
    """Bit ``i`` is set iff ``e`` anticommutes with stabilizer generator ``i``."""
    return code.syndromes(*_data_part(code, e))


def coset_label(code: SurfaceCode, e: PauliString) -> CosetLabel:
    x, z = _data_part(code, e)
    sigma = code.syndromes(x, z)
    pure = code.pure_error(sigma)
    lam = int(code.logical_classes(x ^ pure.x, z ^ pure.z))
    return CosetLabel(tuple(int(b) for b in sigma), lam)
