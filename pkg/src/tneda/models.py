"""Generative models fitted inside the optimization loop.

Three model families:

* an MPS Born machine trained by two-site sweeps of gradient descent on
  the negative log-likelihood (merge a neighboring pair, step the merged
  tensor, split back by truncated SVD),
* a direct-positive MPS updated incrementally by tandem two-site gradient
  ascent on the log-likelihood with projection onto nonnegative entries,
* a chain Bayesian network (Markov chain over bits) fitted by smoothed
  maximum likelihood.

Sweeps keep the chain in mixed-canonical form so the normalization at the
active pair is exactly the Frobenius norm of the merged tensor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mps import (
    DegenerateModelError,
    EncodingMode,
    Mps,
    canonicalize_split,
    log_probability,
    random_init,
)

_AMP_FLOOR = 1e-290  # guards 1/psi in gradients when a sample has ~zero value


@dataclass(frozen=True)
class TrainConfig:
    """Settings for the two-site sweep trainers.

    One sweep is a down-and-back pass over all neighboring pairs. Bond
    dimensions adapt during Born-machine splits: singular values below
    ``svd_cutoff`` (relative to the largest) are dropped and the rank is
    capped at ``chi_max``.
    """

    learning_rate: float
    chi_max: int
    sweeps: int = 1
    svd_cutoff: float = 1e-6
    fresh_init: bool = True
    grad_steps_per_pair: int = 1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.chi_max < 1:
            raise ValueError("chi_max must be >= 1")
        if self.svd_cutoff < 0:
            raise ValueError("svd_cutoff must be >= 0")
        if self.grad_steps_per_pair < 1:
            raise ValueError("grad_steps_per_pair must be >= 1")


def _as_data(data) -> np.ndarray:
    bits = np.asarray(data, dtype=np.intp)
    if bits.ndim != 2 or bits.shape[0] == 0:
        raise ValueError("training data must be a nonempty (n, N) bit array")
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError("training data must be binary")
    return bits


def _right_canonicalize(tensors: list[np.ndarray]) -> list[np.ndarray]:
    """Make sites 1..N-1 right-isometric and normalize the chain to Z = 1."""
    out = [t.copy() for t in tensors]
    for i in range(len(out) - 1, 0, -1):
        chi_l, _, chi_r = out[i].shape
        mat = out[i].reshape(chi_l, 2 * chi_r)
        q, r = np.linalg.qr(mat.T)
        k = q.shape[1]
        out[i] = np.ascontiguousarray(q.T.reshape(k, 2, chi_r))
        out[i - 1] = np.ascontiguousarray(np.einsum("lsa,ma->lsm", out[i - 1], r))
    norm = np.linalg.norm(out[0])
    if norm == 0.0:
        raise DegenerateModelError("cannot canonicalize an all-zero network")
    out[0] = out[0] / norm
    return out


def _select(t: np.ndarray, bits_col: np.ndarray) -> np.ndarray:
    """Physical-index selection, shape (chi_l, n, chi_r)."""
    return t[:, bits_col, :]


def pair_nll_gradient(
    theta: np.ndarray,
    lx: np.ndarray,
    rx: np.ndarray,
    xi: np.ndarray,
    xj: np.ndarray,
    la: np.ndarray | None = None,
    rb: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Born-machine NLL and its analytic gradient w.r.t. a merged pair.

    Args:
        theta: merged two-site tensor (chi_l, 2, 2, chi_r).
        lx, rx: per-sample left/right environments, shapes (n, chi_l) and
            (n, chi_r).
        xi, xj: the pair's bit columns, length n.
        la, rb: bond Gram matrices of the rest of the chain; ``None`` means
            identity (mixed-canonical gauge), in which case Z = ||theta||^2.

    Returns:
        (nll, gradient) where nll is exact when the environments carry no
        hidden scale factors (always true for the canonical training path
        and for :func:`born_pair_gradient`).
    """
    n = lx.shape[0]
    theta_sel = theta[:, xi, xj, :]
    amps = np.einsum("bl,lbr,br->b", lx, theta_sel, rx, optimize=True)
    safe = np.where(np.abs(amps) < _AMP_FLOOR, _AMP_FLOOR, amps)

    if la is None:
        z = float(np.vdot(theta, theta))
        half = theta
    else:
        half = np.einsum("ab,bstd,cd->astc", la, theta, rb, optimize=True)
        z = float(np.einsum("astc,astc->", half, theta, optimize=True))
    if z <= 0.0:
        raise DegenerateModelError("normalization vanished during training")
    grad_z = (2.0 / z) * half

    grad_data = np.zeros_like(theta)
    weighted = rx / safe[:, None]
    for s in (0, 1):
        for t in (0, 1):
            mask = (xi == s) & (xj == t)
            if np.any(mask):
                grad_data[:, s, t, :] = lx[mask].T @ weighted[mask]

    with np.errstate(divide="ignore"):
        nll = -2.0 * float(np.mean(np.log(np.abs(safe)))) + math.log(z)
    grad = -(2.0 / n) * grad_data + grad_z
    return nll, grad


def merge_pair(m: Mps, i: int) -> np.ndarray:
    """Merged tensor of sites (i, i+1), shape (chi_l, 2, 2, chi_r)."""
    if not 0 <= i < m.n_sites - 1:
        raise ValueError(f"pair index {i} out of range")
    return np.einsum("lsk,ktr->lstr", m.tensors[i], m.tensors[i + 1])


def born_pair_environments(
    m: Mps, i: int, data
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Exact environments (lx, rx, la, rb) around pair (i, i+1), any gauge.

    Unscaled; intended for small chains (gradient checks, diagnostics).
    """
    bits = _as_data(data)
    n = bits.shape[0]
    lx = np.ones((n, 1))
    la = np.ones((1, 1))
    for j in range(i):
        t = m.tensors[j]
        lx = np.einsum("bl,lbr->br", lx, _select(t, bits[:, j]), optimize=True)
        la = np.einsum("ab,asc,bsd->cd", la, t, t, optimize=True)
    rx = np.ones((n, 1))
    rb = np.ones((1, 1))
    for j in range(m.n_sites - 1, i + 1, -1):
        t = m.tensors[j]
        rx = np.einsum("lbr,br->bl", _select(t, bits[:, j]), rx, optimize=True)
        rb = np.einsum("asb,csd,bd->ac", t, t, rb, optimize=True)
    return lx, rx, la, rb


def born_pair_gradient(m: Mps, i: int, data) -> tuple[float, np.ndarray]:
    """NLL and analytic gradient w.r.t. the merged tensor of pair (i, i+1)."""
    if m.mode is not EncodingMode.AMPLITUDE:
        raise ValueError("Born-machine gradients require an amplitude-mode model")
    bits = _as_data(data)
    lx, rx, la, rb = born_pair_environments(m, i, bits)
    theta = merge_pair(m, i)
    return pair_nll_gradient(theta, lx, rx, bits[:, i], bits[:, i + 1], la, rb)


def born_nll(m: Mps, data) -> float:
    """Mean negative log-likelihood of the data under a Born machine."""
    bits = _as_data(data)
    return -float(np.mean(log_probability(m, bits)))


def _sweep_pair_schedule(n_sites: int):
    """Down-and-back pair visits with the SVD-weight direction for each.

    Yields (pair_index, absorb_side, moving) where ``moving`` says which
    cached environment to advance after the split.
    """
    last = n_sites - 2
    for i in range(last):
        yield i, "right", "right"
    yield last, "left", "left"
    for i in range(last - 1, -1, -1):
        yield i, "left", "left"


def train_born_machine(data, cfg: TrainConfig, init: Mps | None = None, rng=None) -> Mps:
    """Fit an MPS Born machine by DMRG-style two-site NLL descent.

    Each sweep walks all neighboring pairs down and back; at every pair the
    two tensors are merged, ``cfg.grad_steps_per_pair`` gradient steps are
    applied to the merged tensor, the network is renormalized to Z = 1, and
    the pair is split by truncated SVD (``cfg.chi_max``, ``cfg.svd_cutoff``).

    Args:
        data: (n, N) bit array, n >= 1.
        cfg: training settings.
        init: starting model; ignored when ``cfg.fresh_init`` is set.
        rng: generator or seed for the fresh random start.

    Returns:
        Trained amplitude-mode model with Z = 1.
    """
    bits = _as_data(data)
    n, width = bits.shape
    if width < 2:
        raise ValueError("two-site training needs at least 2 sites")
    if cfg.fresh_init or init is None:
        start = random_init(width, cfg.chi_max, EncodingMode.AMPLITUDE, rng)
    else:
        if init.mode is not EncodingMode.AMPLITUDE:
            raise ValueError("init must be an amplitude-mode model")
        if init.n_sites != width:
            raise ValueError("init size does not match data width")
        start = init
    tensors = _right_canonicalize(list(start.tensors))

    for _ in range(cfg.sweeps):
        # right environments over sites j.. for the current tensors
        rx = [None] * (width + 1)
        rx[width] = np.ones((n, 1))
        for j in range(width - 1, 1, -1):
            rx[j] = np.einsum(
                "lbr,br->bl", _select(tensors[j], bits[:, j]), rx[j + 1], optimize=True
            )
        lx = [None] * width
        lx[0] = np.ones((n, 1))

        for i, absorb, moving in _sweep_pair_schedule(width):
            theta = np.einsum("lsk,ktr->lstr", tensors[i], tensors[i + 1])
            for _ in range(cfg.grad_steps_per_pair):
                _, grad = pair_nll_gradient(theta, lx[i], rx[i + 2], bits[:, i], bits[:, i + 1])
                theta = theta - cfg.learning_rate * grad
            norm = np.linalg.norm(theta)
            if norm == 0.0:
                raise DegenerateModelError("merged tensor trained to zero")
            theta /= norm
            left, right = canonicalize_split(theta, cfg.chi_max, cfg.svd_cutoff, absorb=absorb)
            tensors[i], tensors[i + 1] = left, right
            if moving == "right":
                lx[i + 1] = np.einsum(
                    "bl,lbr->br", lx[i], _select(left, bits[:, i]), optimize=True
                )
            else:
                rx[i + 1] = np.einsum(
                    "lbr,br->bl", _select(right, bits[:, i + 1]), rx[i + 2], optimize=True
                )

    return Mps(tuple(tensors), EncodingMode.AMPLITUDE, cfg.chi_max)


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    scale = np.abs(a).max(axis=1)
    if np.any(scale == 0.0):
        raise DegenerateModelError("a training sample has zero value under the model")
    return a / scale[:, None]


def _normalize_vec(v: np.ndarray) -> np.ndarray:
    scale = np.abs(v).max()
    if scale == 0.0:
        raise DegenerateModelError("normalization vanished during training")
    return v / scale


def train_positive_mps(data, cfg: TrainConfig, init: Mps) -> Mps:
    """Incrementally update a direct-positive MPS by log-likelihood ascent.

    Each sweep visits neighboring pairs down and back and updates the two
    site tensors in tandem: both gradients are evaluated at the current
    parameters, both tensors are stepped, and entries are clamped at zero
    (projected ascent). Bond dimensions never change and a zero learning
    rate leaves the model untouched, so the update is genuinely
    incremental.
    """
    bits = _as_data(data)
    n, width = bits.shape
    if init is None or init.mode is not EncodingMode.DIRECT_POSITIVE:
        raise ValueError("positive-MPS training starts from a direct-positive init")
    if init.n_sites != width:
        raise ValueError("init size does not match data width")
    if width < 2:
        raise ValueError("two-site training needs at least 2 sites")
    tensors = [t.copy() for t in init.tensors]
    lr = cfg.learning_rate

    for _ in range(cfg.sweeps):
        rx = [None] * (width + 1)
        rsum = [None] * (width + 1)
        rx[width] = np.ones((n, 1))
        rsum[width] = np.ones(1)
        for j in range(width - 1, 1, -1):
            rx[j] = _normalize_rows(
                np.einsum("lbr,br->bl", _select(tensors[j], bits[:, j]), rx[j + 1], optimize=True)
            )
            rsum[j] = _normalize_vec(tensors[j].sum(axis=1) @ rsum[j + 1])
        lx = [None] * width
        lsum = [None] * width
        lx[0] = np.ones((n, 1))
        lsum[0] = np.ones(1)

        for i, _, moving in _sweep_pair_schedule(width):
            ti, tj = tensors[i], tensors[i + 1]
            sel_i = _select(ti, bits[:, i])
            sel_j = _select(tj, bits[:, i + 1])
            mid = np.einsum("bl,lbk->bk", lx[i], sel_i, optimize=True)
            amps = np.einsum("bk,kbr,br->b", mid, sel_j, rx[i + 2], optimize=True)
            safe = np.maximum(amps, _AMP_FLOOR)

            ti_sum = ti.sum(axis=1)
            tj_sum = tj.sum(axis=1)
            z = float(lsum[i] @ ti_sum @ tj_sum @ rsum[i + 2])
            if z <= 0.0:
                raise DegenerateModelError("normalization vanished during training")

            grad_theta = np.zeros((ti.shape[0], 2, 2, tj.shape[2]))
            weighted = rx[i + 2] / safe[:, None]
            for s in (0, 1):
                for t in (0, 1):
                    mask = (bits[:, i] == s) & (bits[:, i + 1] == t)
                    if np.any(mask):
                        grad_theta[:, s, t, :] = lx[i][mask].T @ weighted[mask]
            grad_theta /= n
            grad_theta -= np.einsum("l,r->lr", lsum[i], rsum[i + 2])[:, None, None, :] / z

            grad_i = np.einsum("lstr,ktr->lsk", grad_theta, tj, optimize=True)
            grad_j = np.einsum("lstr,lsk->ktr", grad_theta, ti, optimize=True)
            tensors[i] = np.maximum(ti + lr * grad_i, 0.0)
            tensors[i + 1] = np.maximum(tj + lr * grad_j, 0.0)

            if moving == "right":
                lx[i + 1] = _normalize_rows(
                    np.einsum("bl,lbr->br", lx[i], _select(tensors[i], bits[:, i]), optimize=True)
                )
                lsum[i + 1] = _normalize_vec(lsum[i] @ tensors[i].sum(axis=1))
            else:
                rx[i + 1] = _normalize_rows(
                    np.einsum(
                        "lbr,br->bl",
                        _select(tensors[i + 1], bits[:, i + 1]),
                        rx[i + 2],
                        optimize=True,
                    )
                )
                rsum[i + 1] = _normalize_vec(tensors[i + 1].sum(axis=1) @ rsum[i + 2])

    return Mps(tuple(tensors), EncodingMode.DIRECT_POSITIVE, init.chi_max)


# --- chain Bayesian network --------------------------------------------------


@dataclass(frozen=True)
class ChainBayes:
    """Markov chain over bits: p(x) = p(x_1) prod_i p(x_{i+1} | x_i).

    ``conditionals[i, a, b]`` is p(x_{i+2} = a | x_{i+1} = b); every column
    of every table sums to 1.
    """

    p_first: np.ndarray
    conditionals: np.ndarray
    smoothing: float

    def __post_init__(self):
        p_first = np.asarray(self.p_first, dtype=np.float64)
        cond = np.asarray(self.conditionals, dtype=np.float64)
        if p_first.shape != (2,):
            raise ValueError("p_first must have shape (2,)")
        if cond.ndim != 3 or cond.shape[1:] != (2, 2):
            raise ValueError("conditionals must have shape (N-1, 2, 2)")
        if self.smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        for arr, what in ((p_first, "p_first"), (cond, "conditionals")):
            if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12):
                raise ValueError(f"{what} entries must lie in [0, 1]")
        if abs(p_first.sum() - 1.0) > 1e-9:
            raise ValueError("p_first must sum to 1")
        if cond.size and np.abs(cond.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("conditional table columns must sum to 1")
        object.__setattr__(self, "p_first", p_first)
        object.__setattr__(self, "conditionals", cond)

    @property
    def n_sites(self) -> int:
        return self.conditionals.shape[0] + 1


def fit_chain_bayes(data, smoothing: float = 1.0) -> ChainBayes:
    """Maximum-likelihood chain fit with additive (Laplace) smoothing.

    With smoothing 0 this is the exact MLE; a conditioning value that never
    occurs gets a uniform column.
    """
    bits = _as_data(data)
    n, width = bits.shape
    ones_first = bits[:, 0].sum()
    p_first = np.array([n - ones_first + smoothing, ones_first + smoothing], dtype=np.float64)
    p_first /= n + 2.0 * smoothing

    cond = np.empty((width - 1, 2, 2))
    prev = bits[:, :-1]
    nxt = bits[:, 1:]
    for b in (0, 1):
        base = prev == b
        n_b = base.sum(axis=0).astype(np.float64)
        n_b1 = (base & (nxt == 1)).sum(axis=0).astype(np.float64)
        denom = n_b + 2.0 * smoothing
        with np.errstate(invalid="ignore", divide="ignore"):
            p1 = np.where(denom > 0, (n_b1 + smoothing) / denom, 0.5)
        cond[:, 1, b] = p1
        cond[:, 0, b] = 1.0 - p1
    return ChainBayes(p_first, cond, smoothing)


def sample_chain_bayes(b: ChainBayes, rng, size: int | None = None) -> np.ndarray:
    """Ancestral sampling along the chain."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    batch = 1 if size is None else int(size)
    if batch < 1:
        raise ValueError("size must be >= 1")
    width = b.n_sites
    bits = np.empty((batch, width), dtype=np.int8)
    bits[:, 0] = rng.random(batch) < b.p_first[1]
    for i in range(width - 1):
        p1 = b.conditionals[i, 1, bits[:, i]]
        bits[:, i + 1] = rng.random(batch) < p1
    return bits[0] if size is None else bits


def chain_bayes_log_probability(b: ChainBayes, x) -> np.ndarray | float:
    bits = np.asarray(x)
    single = bits.ndim == 1
    if single:
        bits = bits[None, :]
    if bits.shape[1] != b.n_sites:
        raise ValueError(f"expected bit strings of length {b.n_sites}")
    bits = bits.astype(np.intp, copy=False)
    with np.errstate(divide="ignore"):
        logp = np.log(b.p_first[bits[:, 0]])
        for i in range(b.n_sites - 1):
            logp += np.log(b.conditionals[i, bits[:, i + 1], bits[:, i]])
    return float(logp[0]) if single else logp


def chain_bayes_probability(b: ChainBayes, x) -> np.ndarray | float:
    """p(x) = p(x_1) prod p(x_{i+1} | x_i); accepts a single string or a batch."""
    out = np.exp(chain_bayes_log_probability(b, x))
    return float(out) if np.isscalar(out) else out


# Text table format, mirroring the MPS dump: header, sizes, then one line
# of repr floats per table (p_first first, conditionals row-major).

_CHAIN_HEADER = "tneda-chain-bayes 1"


def chain_bayes_to_text(b: ChainBayes) -> str:
    lines = [
        _CHAIN_HEADER,
        f"{b.n_sites} {repr(float(b.smoothing))}",
        " ".join(repr(float(v)) for v in b.p_first),
    ]
    for table in b.conditionals:
        lines.append(" ".join(repr(float(v)) for v in table.ravel()))
    return "\n".join(lines) + "\n"


def chain_bayes_from_text(text: str) -> ChainBayes:
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != _CHAIN_HEADER:
        raise ValueError("not a chain-Bayes table dump")
    n_str, smoothing_str = lines[1].split()
    n = int(n_str)
    if len(lines) != 2 + n:
        raise ValueError("table line count does not match site count")
    p_first = np.array(lines[2].split(), dtype=np.float64)
    cond = np.array(
        [np.array(line.split(), dtype=np.float64).reshape(2, 2) for line in lines[3:]]
    ).reshape(n - 1, 2, 2)
    return ChainBayes(p_first, cond, float(smoothing_str))


# --- exact KL against a finite target distribution ---------------------------


@dataclass(frozen=True)
class FiniteDistribution:
    """Distribution with finite support: unique strings plus probabilities."""

    strings: np.ndarray  # (M, N)
    probs: np.ndarray  # (M,)

    def __post_init__(self):
        strings = np.asarray(self.strings)
        probs = np.asarray(self.probs, dtype=np.float64)
        if strings.ndim != 2 or probs.ndim != 1 or strings.shape[0] != probs.shape[0]:
            raise ValueError("need (M, N) strings with M probabilities")
        if np.any(probs < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("target distribution is not normalized")
        object.__setattr__(self, "strings", strings)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_dict(cls, mapping: dict) -> "FiniteDistribution":
        strings = np.array(list(mapping.keys()), dtype=np.int8)
        probs = np.array(list(mapping.values()), dtype=np.float64)
        return cls(strings, probs)

    def entropy(self) -> float:
        """Shannon entropy in nats over the support."""
        p = self.probs[self.probs > 0]
        return -float(np.sum(p * np.log(p)))


def model_log_probability(model, x) -> np.ndarray | float:
    """log p(x) under an MPS (either encoding) or a ChainBayes model."""
    if isinstance(model, Mps):
        return log_probability(model, x)
    if isinstance(model, ChainBayes):
        return chain_bayes_log_probability(model, x)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def model_kl_vs_target(model, target: FiniteDistribution | dict) -> float:
    """KL(target || model) summed exactly over the target's finite support.

    Returns ``inf`` when the model puts zero probability on a support point
    with positive target mass.
    """
    if isinstance(target, dict):
        target = FiniteDistribution.from_dict(target)
    mask = target.probs > 0
    if not np.any(mask):
        raise ValueError("target distribution has empty support")
    t = target.probs[mask]
    logm = np.atleast_1d(model_log_probability(model, target.strings[mask]))
    if np.any(np.isneginf(logm)):
        return math.inf
    return float(np.sum(t * (np.log(t) - logm)))
