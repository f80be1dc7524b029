"""
Maximum-likelihood decoding over error-correction cosets.

The decoder state is the posterior over ``(lam, sigma)``: the logical class and
ideal syndrome of the accumulated data error, given every measured syndrome so
far.  One noisy round moves a label by an increment ``(dsigma, eps, dlam)``
where ``eps = m XOR sigma'`` is the readout flip pattern; the distribution of
increments (the one-step kernel) follows exactly from the circuit and the
noise model.

Kernels are float arrays of shape ``(L, E, S)`` indexed ``[dlam, eps, dsigma]``,
i.e. flat index ``dsigma | eps << k | dlam << 2k``.  A *sector* restricts the
bookkeeping to all checks (``full``), to the Z checks with the X-part of the
logical class (``X``) or to the X checks with the Z-part (``Z``).
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .circuit import ExtractionCircuit
from .code import SurfaceCode
from .noise import NoiseModel, round_locations
from .pauli import GateKind, PauliString, conjugate_through


class InconsistentObservation(ValueError):
    """The observed record has zero probability under the kernel."""


# -- sectors --------------------------------------------------------------


@dataclass(frozen=True)
class Sector:
    name: str
    checks: tuple[int, ...]  # stabilizer indices, bit i of sigma is checks[i]
    lam_bits: tuple[int, ...]  # bits of the full logical class kept, in order

    @property
    def k(self) -> int:
        return len(self.checks)

    @property
    def n_lam(self) -> int:
        return 1 << len(self.lam_bits)

    @property
    def n_labels(self) -> int:
        return self.n_lam << (2 * self.k)

    def pack(self, bits: np.ndarray) -> np.ndarray:
        """Pack full-length syndrome bits ``(..., n_a)`` into sector integers."""
        sub = np.asarray(bits, dtype=np.int64)[..., list(self.checks)]
        return (sub << np.arange(self.k, dtype=np.int64)).sum(axis=-1)

    def lam(self, full_lam) -> np.ndarray:
        full_lam = np.asarray(full_lam, dtype=np.int64)
        return sum(((full_lam >> b) & 1) << i for i, b in enumerate(self.lam_bits))

    def unpack_lam(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=np.int64)
        return sum(((lam >> i) & 1) << b for i, b in enumerate(self.lam_bits))


def sector(code: SurfaceCode, name: str) -> Sector:
    if name == "full":
        return Sector("full", tuple(range(code.n_a)), (0, 1))
    if name == "X":
        return Sector("X", tuple(code.z_indices.tolist()), (0,))
    if name == "Z":
        return Sector("Z", tuple(code.x_indices.tolist()), (1,))
    raise ValueError(f"unknown sector {name!r} (expected full, X or Z)")


# -- fault propagation ------------------------------------------------------


def effect_tables(circuit: ExtractionCircuit) -> np.ndarray:
    """Effect of a unit Pauli inserted after the gates of each step.

    Returns ``T`` of shape ``(n_steps, 2*nq, n_a + 2n)`` (uint8): row ``q`` is
    ``X_q``, row ``nq + q`` is ``Z_q``; columns are readout flips, then the
    residual data X bits, then the residual data Z bits.  Everything is linear,
    so a general fault's effect is the XOR of its unit rows.
    """
    code = circuit.code
    n, na, nq = code.n, code.n_a, circuit.n_qubits
    last = circuit.n_steps - 1
    T = np.zeros((circuit.n_steps, 2 * nq, na + 2 * n), np.uint8)
    for g in circuit.steps[last].gates:
        a = g.qubits[0]
        if g.kind is GateKind.MEAS_Z:
            T[last, a, a - n] = 1
        elif g.kind is GateKind.MEAS_X:
            T[last, nq + a, a - n] = 1
    for q in range(n):
        T[last, q, na + q] = 1
        T[last, nq + q, na + n + q] = 1
    for s in range(last - 1, -1, -1):
        owner = {q: g for g in circuit.steps[s + 1].gates for q in g.qubits}
        for row in range(2 * nq):
            q = row % nq
            unit = PauliString.single(nq, q, "X" if row < nq else "Z")
            moved = conjugate_through(unit, owner[q])
            for r in np.flatnonzero(moved.x):
                T[s, row] ^= T[s + 1, r]
            for r in np.flatnonzero(moved.z):
                T[s, row] ^= T[s + 1, nq + r]
    return T


@dataclass(frozen=True)
class LocationLabels:
    """Distinct non-zero kernel labels of one fault location with their probabilities."""

    step: int
    qubits: tuple[int, ...]
    labels: np.ndarray  # int64
    probs: np.ndarray


def full_increments(circuit: ExtractionCircuit, effects: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(dsigma bits, eps bits, dlam)`` for rows of effect vectors."""
    code = circuit.code
    n, na = code.n, code.n_a
    effects = np.atleast_2d(effects)
    phi = effects[:, :na]
    dx, dz = effects[:, na: na + n], effects[:, na + n:]
    dsig = code.syndromes(dx, dz)
    return dsig, phi ^ dsig, code.logical_classes(dx, dz)


def location_labels(circuit: ExtractionCircuit, model: NoiseModel, sec: Sector,
                    tables: np.ndarray | None = None) -> list[LocationLabels]:
    """Per-location label distributions projected onto ``sec`` (label 0 folded into no-fault)."""
    T = effect_tables(circuit) if tables is None else tables
    nq = circuit.n_qubits
    k = sec.k
    out = []
    for loc in round_locations(model, circuit):
        rows = []
        for f, _ in loc.dist.alternatives:
            e = np.zeros(T.shape[2], np.uint8)
            for j, q in enumerate(loc.gate.qubits):
                if f.x[j]:
                    e ^= T[loc.step, q]
                if f.z[j]:
                    e ^= T[loc.step, nq + q]
            rows.append(e)
        dsig, eps, dlam = full_increments(circuit, np.array(rows))
        lab = sec.pack(dsig) | (sec.pack(eps) << k) | (sec.lam(dlam) << (2 * k))
        probs = np.array([p for _, p in loc.dist.alternatives])
        uniq, inv = np.unique(lab, return_inverse=True)
        acc = np.bincount(inv, weights=probs, minlength=uniq.size)
        keep = uniq != 0
        if keep.any():
            out.append(LocationLabels(loc.step, loc.gate.qubits, uniq[keep], acc[keep]))
    return out


# -- XOR-group transforms ---------------------------------------------------


def wht(a: np.ndarray) -> np.ndarray:
    """Unnormalised Walsh-Hadamard transform along the last axis, in place (C-contiguous input)."""
    lead, N = a.shape[:-1], a.shape[-1]
    h = 1
    while h < N:
        v = a.reshape(*lead, -1, 2, h)
        lo = v[..., 0, :].copy()
        v[..., 0, :] += v[..., 1, :]
        lo -= v[..., 1, :]
        v[..., 1, :] = lo
        h *= 2
    return a


def xor_shift(a: np.ndarray, label: int, nbits: int) -> np.ndarray:
    """View of ``a`` with ``out[i] = a[i ^ label]``."""
    axes = tuple(nbits - 1 - b for b in range(nbits) if (label >> b) & 1)
    return np.flip(a.reshape((2,) * nbits), axis=axes).reshape(-1) if axes else a


def _mix(locs: list[LocationLabels], nbits: int) -> np.ndarray:
    k = np.zeros(1 << nbits)
    k[0] = 1.0
    shaped = (2,) * nbits
    for loc in locs:
        new = k * (1.0 - loc.probs.sum())
        view = k.reshape(shaped)
        for lab, q in zip(loc.labels.tolist(), loc.probs):
            axes = tuple(nbits - 1 - b for b in range(nbits) if (lab >> b) & 1)
            new.reshape(shaped)[...] += q * np.flip(view, axis=axes)
        k = new
    return k


def _span_basis(labels: list[int]) -> tuple[list[int], list[int]]:
    """Basis of the F2-span of ``labels`` and each label's coordinate bitmask."""
    basis, pivots, coords = [], [], []
    reduced = []  # (vector, coordinate mask) in echelon form
    for lab in labels:
        v, c = lab, 0
        for (rv, rc), p in zip(reduced, pivots):
            if (v >> p) & 1:
                v ^= rv
                c ^= rc
        if v:
            idx = len(basis)
            basis.append(lab)
            reduced.append((v, c ^ (1 << idx)))
            pivots.append(v.bit_length() - 1)
            coords.append(1 << idx)
        else:
            coords.append(c)
    return basis, coords


def _wht_route(locs: list[LocationLabels], nbits: int) -> np.ndarray | None:
    """Kernel via log-domain transform; ``None`` if some local transform is not positive."""
    A = np.zeros(1 << nbits)
    for loc in locs:
        basis, coords = _span_basis(loc.labels.tolist())
        r = len(basis)
        y = np.arange(1 << r)
        ghat = np.full(1 << r, 1.0 - loc.probs.sum())
        for c, q in zip(coords, loc.probs):
            par = np.array([bin(c & v).count("1") & 1 for v in y])
            ghat += q * (1 - 2 * par)
        if (ghat <= 0).any():
            return None
        coef = wht(np.log(ghat)) / (1 << r)
        for w in range(1 << r):
            lab = 0
            for i in range(r):
                if (w >> i) & 1:
                    lab ^= basis[i]
            A[lab] += coef[w]
    K = wht(np.exp(wht(A))) / (1 << nbits)
    np.maximum(K, 0.0, out=K)
    return K / K.sum()


# -- kernels ----------------------------------------------------------------


def model_hash(circuit: ExtractionCircuit, model: NoiseModel, sec: Sector) -> str:
    blob = json.dumps({"d": circuit.code.distance, "circuit": circuit.dump(), "model": repr(model),
                       "sector": sec.name}, sort_keys=True)
    return hashlib.sha1(blob.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class OneStepKernel:
    sector: Sector
    probs: np.ndarray  # (L, E, S)
    model_hash: str = ""

    @property
    def k(self) -> int:
        return self.sector.k

    def entry(self, dsigma: int, eps: int, dlam: int) -> float:
        return float(self.probs[dlam, eps, dsigma])

    def total(self) -> float:
        return float(self.probs.sum())

    def content_hash(self) -> str:
        body = np.ascontiguousarray(self.probs, dtype="<f8").tobytes()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()

    @cached_property
    def transfer(self) -> np.ndarray:
        """``KT[dlam, a, eps] = K[dlam, eps, a ^ eps]`` (the update's matrix form)."""
        L, E, S = self.probs.shape
        KT = np.empty((L, S, E))
        a = np.arange(S)
        for e in range(E):
            KT[:, :, e] = self.probs[:, e, a ^ e]
        return KT

    @cached_property
    def block(self) -> np.ndarray | None:
        """``KT`` laid out as one ``(L*S, L*S)`` matrix over ``(lam, a) -> (lam', eps)``; small sectors only."""
        L, S, _ = self.transfer.shape
        if L * S > 2048:
            return None
        lam = np.arange(L)
        return self.transfer[lam[:, None] ^ lam[None, :]].transpose(0, 2, 1, 3).reshape(L * S, L * S)

    def spread(self) -> np.ndarray:
        """Kernel marginalised over readout flips, shape ``(L, S)``."""
        return self.probs.sum(axis=1)


def build_kernel(code: SurfaceCode, circuit: ExtractionCircuit, model: NoiseModel, sector_name: str = "full",
                 method: str = "auto") -> OneStepKernel:
    """One-round kernel by exact enumeration of every fault location.

    ``method`` is ``"mix"`` (sequential XOR mixing, exact in relative terms),
    ``"wht"`` (log-domain Walsh-Hadamard route, falls back to mixing when a
    local transform is not positive) or ``"auto"`` (mixing up to 2**20 labels).
    """
    if circuit.code is not code:
        raise ValueError("circuit was built for a different code")
    sec = sector(code, sector_name)
    nbits = 2 * sec.k + len(sec.lam_bits)
    locs = location_labels(circuit, model, sec)
    if method == "auto":
        method = "mix" if nbits <= 20 else "wht"
    if method == "wht":
        flat = _wht_route(locs, nbits)
        if flat is None:
            flat = _mix(locs, nbits)
    elif method == "mix":
        flat = _mix(locs, nbits)
    else:
        raise ValueError(f"unknown kernel method {method!r}")
    S = 1 << sec.k
    return OneStepKernel(sec, flat.reshape(sec.n_lam, S, S), model_hash(circuit, model, sec))


# -- posterior --------------------------------------------------------------


class CosetDistribution:
    """Posterior over ``(lam, sigma)`` for a batch of runs; ``probs`` has shape ``(B, L, S)``."""

    def __init__(self, sec: Sector, batch: int = 1):
        self.sector = sec
        self.probs = np.zeros((batch, sec.n_lam, 1 << sec.k))
        self.probs[:, 0, 0] = 1.0

    @property
    def batch(self) -> int:
        return self.probs.shape[0]

    def keep(self, mask: np.ndarray) -> None:
        self.probs = self.probs[mask]


def _gather(probs: np.ndarray, m: np.ndarray) -> np.ndarray:
    """``out[b, l, s] = probs[b, l, s ^ m[b]]``."""
    S = probs.shape[2]
    idx = np.arange(S)[None, :] ^ m[:, None]
    return np.take_along_axis(probs, idx[:, None, :], axis=2)


def _normalise(probs: np.ndarray, prune: float) -> np.ndarray:
    np.maximum(probs, 0.0, out=probs)
    tot = probs.sum(axis=(1, 2))
    if (tot <= 0).any() or not np.isfinite(tot).all():
        raise InconsistentObservation("observed syndrome has zero probability under the kernel")
    probs /= tot[:, None, None]
    if prune > 0:
        probs[probs < prune * probs.max(axis=(1, 2), keepdims=True)] = 0.0
    return probs


def update_batch(probs: np.ndarray, kernel: OneStepKernel, m: np.ndarray, prune: float = 0.0,
                 chunk: int = 256) -> np.ndarray:
    """Bayes update of ``(B, L, S)`` posteriors on sector-packed readouts ``m`` (length ``B``).

    ``pi'(l', s') ∝ sum_{l, s} pi(l, s) K[l ^ l', m ^ s', s ^ s']``.  Writing
    ``a = s ^ m`` and ``eps = s' ^ m`` turns this into one matrix product per
    pair of logical classes over the rows ``a`` that carry any mass.
    """
    B, L, S = probs.shape
    rho = _gather(probs, m)
    out = np.zeros_like(probs)
    KB = kernel.block
    for lo in range(0, B, chunk):
        r = rho[lo: lo + chunk]
        if KB is not None:
            flat = r.reshape(r.shape[0], L * S)
            rows = np.flatnonzero(flat.any(axis=0))
            res = flat @ KB if 2 * rows.size > L * S else flat[:, rows] @ KB[rows]
            out[lo: lo + chunk] = res.reshape(-1, L, S)
            continue
        KT = kernel.transfer
        rows = np.flatnonzero(r.any(axis=(0, 1)))
        for l in range(L):
            for lp in range(L):
                if 2 * rows.size > S:
                    out[lo: lo + chunk, lp] += r[:, l] @ KT[l ^ lp]
                else:
                    out[lo: lo + chunk, lp] += r[:, l, rows] @ KT[l ^ lp][rows]
    return _normalise(_gather(out, m), prune)


def update(dist: CosetDistribution, kernel: OneStepKernel, m, prune: float = 0.0) -> CosetDistribution:
    """Condition ``dist`` on one round whose full-length readout bits are ``m``."""
    packed = kernel.sector.pack(np.atleast_2d(m))
    packed = np.broadcast_to(packed.reshape(-1), (dist.batch,))
    dist.probs = update_batch(dist.probs, kernel, packed, prune)
    return dist


def predict_batch(probs: np.ndarray, sigma_star: np.ndarray) -> np.ndarray:
    """Most likely logical class at the exact final syndrome; ties go to class 0."""
    B = probs.shape[0]
    col = probs[np.arange(B), :, sigma_star]  # (B, L)
    if (col.sum(axis=1) <= 0).any():
        raise InconsistentObservation("final syndrome has zero posterior probability")
    return col.argmax(axis=1)


def predict(dist: CosetDistribution, sigma_star) -> int:
    s = dist.sector.pack(np.atleast_2d(sigma_star))
    return int(predict_batch(dist.probs[:1], s[:1])[0])


# -- phenomenological variant -----------------------------------------------


@dataclass(frozen=True, eq=False)
class PhenomenologicalKernel:
    sector: Sector
    spread: np.ndarray  # (L, S)
    q: np.ndarray  # (k,) per-check readout flip probability

    @cached_property
    def spread_hat(self) -> np.ndarray:
        return wht(self.spread.reshape(-1).copy())

    @cached_property
    def likelihood(self) -> np.ndarray:
        """``lik[c] = prod_i q_i^{c_i} (1 - q_i)^{1 - c_i}`` for mismatch patterns ``c``."""
        lik = np.ones(1)
        for qi in self.q:
            lik = np.concatenate([lik * (1 - qi), lik * qi])
        return lik


def build_phenomenological_kernel(code: SurfaceCode, circuit: ExtractionCircuit, model: NoiseModel,
                                  sector_name: str = "full", kernel: OneStepKernel | None = None
                                  ) -> PhenomenologicalKernel:
    kernel = kernel or build_kernel(code, circuit, model, sector_name)
    sec = kernel.sector
    eps_marg = kernel.probs.sum(axis=(0, 2))  # (E,)
    e = np.arange(eps_marg.size)
    q = np.array([eps_marg[(e >> i) & 1 == 1].sum() for i in range(sec.k)])
    return PhenomenologicalKernel(sec, kernel.spread(), np.clip(q, 0.0, 1.0))


def update_phenomenological(probs: np.ndarray, pk: PhenomenologicalKernel, m: np.ndarray,
                            prune: float = 0.0) -> np.ndarray:
    """Spread by the flip-independent kernel, then weight each ``sigma'`` by the readout likelihood."""
    B, L, S = probs.shape
    flat = wht(probs.reshape(B, L * S).copy())
    flat *= pk.spread_hat[None, :]
    wht(flat)
    out = flat.reshape(B, L, S) / (L * S)
    idx = np.arange(S)[None, :] ^ m[:, None]
    out *= pk.likelihood[idx][:, None, :]
    return _normalise(out, prune)


# -- decoder ------------------------------------------------------------------


@dataclass
class _Tracker:
    kernel: OneStepKernel | PhenomenologicalKernel
    dist: CosetDistribution

    @property
    def sector(self) -> Sector:
        return self.kernel.sector


def marginal_tracking(code: SurfaceCode, circuit: ExtractionCircuit, model: NoiseModel,
                      method: str = "auto") -> tuple[tuple[OneStepKernel, CosetDistribution], ...]:
    """Independent (kernel, initial posterior) pairs for X errors and for Z errors."""
    out = []
    for name in ("X", "Z"):
        K = build_kernel(code, circuit, model, name, method)
        out.append((K, CosetDistribution(K.sector)))
    return tuple(out)


class MLDecoder:
    """Coset-tracking decoder.

    ``tracking`` is ``"full"`` (joint X/Z bookkeeping) or ``"marginal"`` (separate
    X and Z sectors); ``phenomenological=True`` swaps the exact update for the
    spread-then-weight approximation.  ``prune`` zeroes posterior entries below
    that fraction of the largest one after each update (0 keeps the update exact).
    """

    def __init__(self, code: SurfaceCode, circuit: ExtractionCircuit, model: NoiseModel, tracking: str = "full",
                 phenomenological: bool = False, prune: float = 0.0, kernels: dict | None = None,
                 method: str = "auto"):
        if tracking not in ("full", "marginal"):
            raise ValueError(f"tracking must be 'full' or 'marginal', got {tracking!r}")
        self.code = code
        self.tracking = tracking
        self.phenomenological = phenomenological
        self.prune = prune
        names = ("full",) if tracking == "full" else ("X", "Z")
        kernels = kernels or {}
        self.kernels = {nm: kernels.get(nm) or build_kernel(code, circuit, model, nm, method) for nm in names}
        self.pheno = {nm: build_phenomenological_kernel(code, circuit, model, nm, K) for nm, K in self.kernels.items()} \
            if phenomenological else None
        self.name = ("ml-phenomenological" if phenomenological else f"mlcln-{tracking}")
        self.reset(1)

    def reset(self, batch: int) -> None:
        self.dists = {nm: CosetDistribution(K.sector, batch) for nm, K in self.kernels.items()}

    def observe(self, m: np.ndarray) -> None:
        m = np.atleast_2d(m)
        for nm, dist in self.dists.items():
            sec = dist.sector
            packed = sec.pack(m)
            if self.pheno is not None:
                dist.probs = update_phenomenological(dist.probs, self.pheno[nm], packed, self.prune)
            else:
                dist.probs = update_batch(dist.probs, self.kernels[nm], packed, self.prune)

    def predict(self, sigma_star: np.ndarray) -> np.ndarray:
        sigma_star = np.atleast_2d(sigma_star)
        lam = np.zeros(sigma_star.shape[0], np.int64)
        for dist in self.dists.values():
            sec = dist.sector
            lam |= sec.unpack_lam(predict_batch(dist.probs, sec.pack(sigma_star)))
        return lam

    def keep(self, mask: np.ndarray) -> None:
        for dist in self.dists.values():
            dist.keep(mask)


# -- kernel files ---------------------------------------------------------------

_MAGIC = b"QECMLK01"


def save_kernel(kernel: OneStepKernel, path: str | Path) -> None:
    """Binary table: magic, header length, JSON header (sector, checks, model hash), float64 body."""
    header = json.dumps({"k": kernel.k, "sector": kernel.sector.name, "checks": list(kernel.sector.checks),
                         "lam_bits": list(kernel.sector.lam_bits), "model_hash": kernel.model_hash,
                         "shape": list(kernel.probs.shape)}).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(kernel.probs, dtype="<f8").tobytes())


def read_kernel_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path} is not a kernel file")
        (size,) = struct.unpack("<I", fh.read(4))
        return json.loads(fh.read(size))


def load_kernel(path: str | Path, expect_hash: str | None = None) -> OneStepKernel:
    head = read_kernel_header(path)
    if expect_hash is not None and head["model_hash"] != expect_hash:
        raise ValueError(f"{path} was built for a different model")
    with open(path, "rb") as fh:
        fh.seek(8)
        (size,) = struct.unpack("<I", fh.read(4))
        fh.seek(12 + size)
        body = np.frombuffer(fh.read(), dtype="<f8")
    sec = Sector(head["sector"], tuple(head["checks"]), tuple(head["lam_bits"]))
    return OneStepKernel(sec, body.reshape(head["shape"]).copy(), head["model_hash"])


def cached_kernel(cache_dir: str | Path | None, code: SurfaceCode, circuit: ExtractionCircuit, model: NoiseModel,
                  sector_name: str, method: str = "auto") -> OneStepKernel:
    """Load the kernel from ``cache_dir`` if present, otherwise build and store it."""
    if cache_dir is None:
        return build_kernel(code, circuit, model, sector_name, method)
    h = model_hash(circuit, model, sector(code, sector_name))
    path = Path(cache_dir) / f"{h}.qk"
    if path.exists():
        return load_kernel(path, h)
    K = build_kernel(code, circuit, model, sector_name, method)
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    save_kernel(K, path)
    return K
