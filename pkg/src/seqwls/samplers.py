"""Sampling from the update measures and sequential sample recycling.

The optimal measures satisfy the mixture identity
``mu_{m+1} = (1 - 1/(m+1)) mu_m + 1/(m+1) sigma_{m+1}``, which lets an i.i.d.
sample for ``mu_m`` be recycled into one for ``mu_{m+1}``. Three step rules are
implemented (:func:`algorithm1_step`, :func:`algorithm2_step`,
:func:`algorithm3_step`) together with the ``q``-function variant
:func:`multi_step`. Every fresh draw is booked in a :class:`CostLedger`.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import ndtr

from .basis import BasisFamily, HaarTreeBasis, HermiteBasis
from .budget import n_eps
from .leastsq import assemble_gramian, spectral_deviation

_SQRT_2PI = math.sqrt(2.0 * math.pi)

#: Hard limit on the Hermite inversion bracket half-width.
HARD_RADIUS = 1e6


class BracketError(RuntimeError):
    """The inversion bracket grew past :data:`HARD_RADIUS`."""


class IterationCapError(RuntimeError):
    """Algorithm 3 did not reach the stability criterion within its cap."""


@dataclass(frozen=True)
class RngStream:
    """Identifies one independent random stream: ``(seed, trial, purpose)``.

    Backed by the counter-based Philox generator seeded through
    :class:`numpy.random.SeedSequence` so that streams for different trials
    and purposes never overlap.
    """

    seed: int
    trial: int = 0
    purpose: str = "sampling"

    def generator(self) -> np.random.Generator:
        tag = zlib.crc32(self.purpose.encode())
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.trial, tag))
        return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(rng))


@dataclass
class SampleSet:
    """Sample ``S_m`` targeting ``mu_m`` for the basis ``basis``."""

    basis: BasisFamily
    m: int
    points: np.ndarray
    gramian: np.ndarray | None = None

    def __len__(self):
        return len(self.points)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)


@dataclass
class StepCost:
    m_from: int
    m_to: int
    size: int
    replaced: int  # draws from the new update measure(s)
    extended: int  # all other fresh draws

    @property
    def fresh(self) -> int:
        return self.replaced + self.extended


@dataclass
class CostLedger:
    """Per-step sample counts and cumulative cost ``C_m``.

    ``raw_draws`` is incremented by the low-level samplers themselves, so it
    counts independently of the per-step bookkeeping.
    """

    steps: list[StepCost] = field(default_factory=list)
    raw_draws: int = 0

    def record(self, m_from, m_to, size, replaced, extended):
        self.steps.append(StepCost(m_from, m_to, int(size), int(replaced), int(extended)))

    def size(self, m: int) -> int:
        """``n(m)``: size of the sample produced for ``V_m``."""
        for step in self.steps:
            if step.m_to == m:
                return step.size
        raise KeyError(m)

    def replacements(self, m: int) -> int:
        """``n~(m)``: update-measure draws while moving from ``V_m`` onward."""
        for step in self.steps:
            if step.m_from == m:
                return step.replaced
        raise KeyError(m)

    def s(self, m: int) -> int:
        """``s(m) = sum_{k<m} n~(k)``."""
        return sum(st.replaced for st in self.steps if 1 <= st.m_from and st.m_to <= m)

    def cost(self, m: int) -> int:
        """``C_m``: all fresh draws spent to produce ``S_1, ..., S_m``."""
        return sum(st.fresh for st in self.steps if st.m_to <= m)


def hermite_cdf(j, x):
    """CDF of ``sigma_j`` for the Hermite basis.

    ``Phi_j(x) = Phi(x) - g(x) sum_{k=1}^{j-1} H_k(x) H_{k-1}(x) / sqrt(k)``,
    with ``Phi``, ``g`` the standard normal CDF and density. ``j`` and ``x``
    broadcast; ``j`` may differ per element.
    """
    jj, xx = np.broadcast_arrays(np.asarray(j, dtype=np.int64), np.asarray(x, dtype=float))
    if jj.size and jj.min() < 1:
        raise ValueError("basis index must be >= 1")
    total = np.zeros(xx.shape)
    h_prev = np.ones(xx.shape)
    h_cur = xx.copy()
    for k in range(1, int(jj.max()) if jj.size else 1):
        total += np.where(k < jj, h_cur * h_prev, 0.0) / math.sqrt(k)
        h_prev, h_cur = h_cur, (xx * h_cur - math.sqrt(k) * h_prev) / math.sqrt(k + 1)
    out = ndtr(xx) - total * np.exp(-0.5 * xx * xx) / _SQRT_2PI
    return float(out) if out.ndim == 0 else out


@numba.njit(cache=True)
def _cdf_scalar(j, x):
    total = 0.0
    h_prev = 1.0
    h_cur = x
    for k in range(1, j):
        total += h_cur * h_prev / math.sqrt(k)
        h_next = (x * h_cur - math.sqrt(k) * h_prev) / math.sqrt(k + 1)
        h_prev = h_cur
        h_cur = h_next
    ndtr = 0.5 * math.erfc(-x / math.sqrt(2.0))
    return ndtr - total * math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


@numba.njit(cache=True)
def _invert_kernel(js, z, tol, hard_radius, out):
    for i in range(js.size):
        j = js[i]
        radius = 2.0 * math.sqrt(math.log(j) + 10.0) + 10.0
        while _cdf_scalar(j, -radius) > z[i] or _cdf_scalar(j, radius) < z[i]:
            radius *= 2.0
            if radius > hard_radius:
                return i
        lo = -radius
        hi = radius
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _cdf_scalar(j, mid) < z[i]:
                lo = mid
            else:
                hi = mid
        out[i] = 0.5 * (lo + hi)
    return -1


def invert_hermite_cdf(js, z, tol: float = 1e-12) -> np.ndarray:
    """Solve ``Phi_j(x) = z`` elementwise by bracketed bisection.

    The bracket ``[-B, B]`` starts at ``B = 2 sqrt(ln j + 10) + 10`` and doubles
    until it contains ``z``; bisection runs until the width is ``<= tol``.
    """
    js, z = np.broadcast_arrays(np.asarray(js, dtype=np.int64), np.asarray(z, dtype=float))
    shape = z.shape
    js, z = np.ascontiguousarray(js.ravel()), np.ascontiguousarray(z.ravel())
    if js.size and js.min() < 1:
        raise ValueError("basis index must be >= 1")
    out = np.empty(js.size)
    failed = _invert_kernel(js, z, tol, HARD_RADIUS, out)
    if failed >= 0:
        raise BracketError(f"inversion bracket for j={js[failed]}, z={z[failed]} "
                           "exceeded the hard radius")
    return out.reshape(shape)


def _draw(basis: BasisFamily, js, rng: np.random.Generator, tol: float = 1e-12,
          ledger: CostLedger | None = None) -> np.ndarray:
    """One ``sigma_j`` draw per entry of ``js``."""
    js = np.asarray(js, dtype=np.int64)
    if js.size and js.min() < 1:
        raise ValueError("basis index must be >= 1")
    if isinstance(basis, HermiteBasis):
        out = invert_hermite_cdf(js, rng.random(js.shape), tol=tol)
    elif isinstance(basis, HaarTreeBasis):
        if js.size and js.max() > basis.max_dim():
            raise ValueError("basis index beyond the tree size")
        levels, shifts = basis.index_arrays()
        u = rng.random(js.shape)
        out = np.ldexp(shifts[js - 1] + u, -levels[js - 1])
    else:
        raise TypeError(f"no sampler for {type(basis).__name__}")
    if ledger is not None:
        ledger.raw_draws += js.size
    return out


def sample_sigma(basis: BasisFamily, j: int, rng, tol: float = 1e-12, size=None,
                 ledger: CostLedger | None = None):
    """Draw from ``d sigma_j = |phi_j|^2 d rho``.

    Haar: uniform on the support of the ``j``-th wavelet. Hermite: inverse
    transform sampling with bisection to resolution ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = as_generator(rng)
    js = np.full(() if size is None else size, j, dtype=np.int64)
    out = _draw(basis, js, rng, tol, ledger)
    return float(out) if size is None else out


def sample_mu(basis: BasisFamily, m: int, rng, size=None, tol: float = 1e-12,
              ledger: CostLedger | None = None):
    """Draw from ``mu_m``: pick ``j`` uniform in ``{1..m}``, then draw ``sigma_j``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = as_generator(rng)
    js = rng.integers(1, m + 1, size=() if size is None else size)
    out = _draw(basis, js, rng, tol, ledger)
    return float(out) if size is None else out


def initial_sample(basis: BasisFamily, n1: int, rng, ledger: CostLedger | None = None,
                   tol: float = 1e-12) -> SampleSet:
    """``S_1``: ``n1`` i.i.d. draws from ``mu_1``."""
    rng = as_generator(rng)
    pts = sample_mu(basis, 1, rng, size=n1, tol=tol, ledger=ledger)
    if ledger is not None:
        ledger.record(0, 1, n1, 0, n1)
    return SampleSet(basis, 1, pts)


def _labels(rng, m_next: int, count: int, labels):
    if labels is None:
        return rng.integers(1, m_next + 1, size=count)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (count,):
        raise ValueError(f"expected {count} labels, got shape {labels.shape}")
    return labels


def algorithm1_step(sample: SampleSet, n_next: int, rng, ledger: CostLedger | None = None,
                    tol: float = 1e-12, labels=None) -> SampleSet:
    """Recycle ``S_m`` into ``S_{m+1}`` of size ``n_next``.

    Each old point is replaced by a fresh ``sigma_{m+1}`` draw with probability
    ``1/(m+1)`` and kept otherwise; slots ``n(m)+1..n_next`` are filled with
    fresh ``mu_{m+1}`` draws. ``labels`` optionally fixes the ``a_i``.
    """
    rng = as_generator(rng)
    m, basis, n_m = sample.m, sample.basis, len(sample)
    if n_next < n_m:
        raise ValueError("target size must not shrink")
    a = _labels(rng, m + 1, n_m, labels)
    replace = np.flatnonzero(a == m + 1)
    n_ext = n_next - n_m
    js = np.concatenate([np.full(replace.size, m + 1), rng.integers(1, m + 2, size=n_ext)])
    fresh = _draw(basis, js, rng, tol, ledger)
    pts = np.empty(n_next)
    pts[:n_m] = sample.points
    pts[replace] = fresh[:replace.size]
    pts[n_m:] = fresh[replace.size:]
    if ledger is not None:
        ledger.record(m, m + 1, n_next, replace.size, n_ext)
    return SampleSet(basis, m + 1, pts)


def multi_step(sample: SampleSet, q: int, n_next: int, rng, ledger: CostLedger | None = None,
               tol: float = 1e-12, labels=None) -> SampleSet:
    """Recycle ``S_m`` into a ``mu_{m+q}`` sample in one step.

    An old point is replaced with probability ``q/(m+q)`` by a draw from the
    uniform mixture of ``sigma_{m+1}..sigma_{m+q}``. ``labels`` are the ``a_i``
    in ``{1..m+q}``; ``a_i > m`` means replacement by ``sigma_{a_i}``.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    rng = as_generator(rng)
    m, basis, n_m = sample.m, sample.basis, len(sample)
    if n_next < n_m:
        raise ValueError("target size must not shrink")
    a = _labels(rng, m + q, n_m, labels)
    replace = np.flatnonzero(a > m)
    n_ext = n_next - n_m
    js = np.concatenate([a[replace], rng.integers(1, m + q + 1, size=n_ext)])
    fresh = _draw(basis, js, rng, tol, ledger)
    pts = np.empty(n_next)
    pts[:n_m] = sample.points
    pts[replace] = fresh[:replace.size]
    pts[n_m:] = fresh[replace.size:]
    if ledger is not None:
        ledger.record(m, m + q, n_next, replace.size, n_ext)
    return SampleSet(basis, m + q, pts)


def _queue_fill(a, m, queue, start, basis, rng, tol, ledger):
    """Alg. 2/3 body for a block of labels; returns points, queue cursor, counts."""
    new = a == m + 1
    pts = np.empty(a.size)
    old_slots = np.flatnonzero(~new)
    take = min(old_slots.size, queue.size - start)
    pts[old_slots[:take]] = queue[start:start + take]
    overflow = old_slots[take:]
    new_slots = np.flatnonzero(new)
    js = np.concatenate([np.full(new_slots.size, m + 1), rng.integers(1, m + 1, size=overflow.size)])
    fresh = _draw(basis, js, rng, tol, ledger)
    pts[new_slots] = fresh[:new_slots.size]
    pts[overflow] = fresh[new_slots.size:]
    return pts, start + take, new, overflow


def algorithm2_step(sample: SampleSet, n_next: int, rng, ledger: CostLedger | None = None,
                    tol: float = 1e-12, labels=None) -> SampleSet:
    """Recycle ``S_m`` through a queue into ``S_{m+1}`` of size ``n_next``.

    For every output slot: with probability ``1/(m+1)`` draw ``sigma_{m+1}``,
    otherwise pop the next unused old point, or draw ``mu_m`` once the queue
    is empty.
    """
    rng = as_generator(rng)
    m, basis = sample.m, sample.basis
    a = _labels(rng, m + 1, n_next, labels)
    pts, _, new, overflow = _queue_fill(a, m, sample.points, 0, basis, rng, tol, ledger)
    if ledger is not None:
        ledger.record(m, m + 1, n_next, int(new.sum()), overflow.size)
    return SampleSet(basis, m + 1, pts)


def _first_stable(phi, w, acc, total, dim, probes, threshold=0.5):
    """First prefix of the block whose Gramian satisfies ``||G - I||_2 <= threshold``.

    ``acc`` holds the unnormalised Gramian of the ``total`` earlier points.
    Returns ``(index, gramian)`` or ``None``. Two lower bounds on the spectral
    norm of ``G_i - I`` are available as prefix sums over the block: the
    diagonal deviations and Rayleigh quotients along eigenvectors of earlier
    exact solves (``probes``). Only prefixes passing both get an eigensolve.
    """
    counts = total + np.arange(1, len(w) + 1, dtype=float)
    wphi = phi * w[:, None]
    diag = (np.cumsum(wphi * phi, axis=0) + np.diag(acc)) / counts[:, None]
    lower = np.abs(diag - 1.0).max(axis=1)
    lower[counts < dim] = np.inf
    start = 0
    while True:
        bound = lower[start:]
        if probes:
            V = np.stack(probes[-4:], axis=1)
            proj = phi[start:] @ V
            base = np.einsum("ir,ij,jr->r", V, acc, V)
            if start:
                base = base + (w[:start, None] * (phi[:start] @ V) ** 2).sum(axis=0)
            rq = (np.cumsum(w[start:, None] * proj**2, axis=0) + base) / counts[start:, None]
            bound = np.maximum(bound, np.abs(rq - 1.0).max(axis=1))
        cand = np.flatnonzero(bound <= threshold)
        if cand.size == 0:
            return None
        idx = start + int(cand[0])
        G = (acc + wphi[:idx + 1].T @ phi[:idx + 1]) / counts[idx]
        G = np.triu(G) + np.triu(G, 1).T
        lam, vec = np.linalg.eigh(G - np.eye(dim))
        if max(-lam[0], lam[-1]) <= threshold:
            return idx, G
        probes.extend([vec[:, 0], vec[:, -1]])
        del probes[:-4]
        start = idx + 1


def algorithm3_step(sample: SampleSet, rng, ledger: CostLedger | None = None,
                    tol: float = 1e-12, cap: int | None = None, block: int = 256) -> SampleSet:
    """Grow ``S_{m+1}`` point by point until ``||G_{m+1} - I||_2 <= 1/2``.

    Points are generated exactly as in :func:`algorithm2_step`; from the
    ``(m+1)``-th point on, the Gramian of the points so far is checked after
    each addition. Candidates are produced in blocks; points past the
    stopping index are discarded and not booked as cost. An empty ``sample``
    with ``m = 0`` bootstraps ``S_1``.
    """
    rng = as_generator(rng)
    m, basis = sample.m, sample.basis
    dim = m + 1
    if cap is None:
        cap = 100 * n_eps(dim, 0.01)
    queue = sample.points
    cursor = 0
    acc = np.zeros((dim, dim))
    kept: list[np.ndarray] = []
    probes: list[np.ndarray] = []
    n_new = n_over = total = 0
    while True:
        b = min(block, cap - total)
        if b <= 0:
            raise IterationCapError(f"stability not reached within {cap} points at m={dim}")
        a = rng.integers(1, dim + 1, size=b)
        pts, cursor, new, overflow = _queue_fill(a, m, queue, cursor, basis, rng, tol, None)
        phi = basis.matrix(pts, dim)
        w = dim / np.sum(phi * phi, axis=1)
        hit = _first_stable(phi, w, acc, total, dim, probes)
        if hit is not None:
            stop = hit[0] + 1
            kept.append(pts[:stop])
            n_new += int(new[:stop].sum())
            n_over += int(np.count_nonzero(overflow < stop))
            total += stop
            gram = hit[1]
            break
        kept.append(pts)
        n_new += int(new.sum())
        n_over += overflow.size
        acc = acc + (phi * w[:, None]).T @ phi
        total += b
    if ledger is not None:
        ledger.raw_draws += n_new + n_over
        ledger.record(m, dim, total, n_new, n_over)
    return SampleSet(basis, dim, np.concatenate(kept), gramian=gram)


def bootstrap_algorithm3(basis: BasisFamily, rng, ledger: CostLedger | None = None,
                         tol: float = 1e-12, **kw) -> SampleSet:
    """Stability-guaranteed ``S_1``: ``mu_1`` draws until ``||G_1 - I|| <= 1/2``."""
    empty = SampleSet(basis, 0, np.empty(0))
    return algorithm3_step(empty, rng, ledger, tol=tol, **kw)


def check_stable(sample: SampleSet) -> float:
    """Spectral deviation of the Gramian of ``sample`` for ``V_m``."""
    return spectral_deviation(assemble_gramian(sample.basis, sample.m, sample.points))
