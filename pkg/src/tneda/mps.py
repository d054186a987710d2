"""Matrix product states over binary variables.

An MPS factorizes a function on {0,1}^N into a chain of order-3 tensors
``T[i]`` with shapes ``(chi_{i-1}, 2, chi_i)`` and ``chi_0 = chi_N = 1``.
Depending on the encoding mode the chain represents either amplitudes
(probability = squared value / Z) or probabilities directly (value / Z).

All operations treat :class:`Mps` values as immutable and return new
instances. Contractions run site by site with interleaved renormalization
so partition functions and per-string probabilities stay finite in log
space at any chain length.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class EncodingMode(Enum):
    """How the tensor chain encodes a probability distribution."""

    #: Born rule: p(x) = psi(x)^2 / Z with real amplitudes psi.
    AMPLITUDE = "amplitude"
    #: Probabilities encoded in first power with nonnegative entries.
    DIRECT_POSITIVE = "direct_positive"
    #: First-power encoding without an entrywise sign constraint. Arises
    #: when a Born machine is squared into an explicit probability network
    #: (e.g. by :func:`apply_diffusion`); every full contraction is still
    #: nonnegative even though single entries may not be.
    DIRECT = "direct"


class DegenerateModelError(ValueError):
    """The network does not define a normalizable distribution (Z <= 0)."""


@dataclass(frozen=True)
class Mps:
    """Immutable matrix product state.

    Args:
        tensors: order-3 arrays with shapes ``(chi_{i-1}, 2, chi_i)``,
            boundary bonds of size 1.
        mode: encoding mode.
        chi_max: largest bond dimension the network is allowed to carry.
    """

    tensors: tuple[np.ndarray, ...]
    mode: EncodingMode
    chi_max: int

    def __post_init__(self):
        tensors = tuple(np.ascontiguousarray(t, dtype=np.float64) for t in self.tensors)
        if len(tensors) < 1:
            raise ValueError("an MPS needs at least one site")
        if self.chi_max < 1:
            raise ValueError("chi_max must be >= 1")
        for i, t in enumerate(tensors):
            if t.ndim != 3 or t.shape[1] != 2:
                raise ValueError(f"site {i}: expected shape (chi_l, 2, chi_r), got {t.shape}")
            if not np.all(np.isfinite(t)):
                raise ValueError(f"site {i}: non-finite entries")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for i in range(len(tensors) - 1):
            if tensors[i].shape[2] != tensors[i + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {i} and {i + 1}")
        if any(max(t.shape[0], t.shape[2]) > self.chi_max for t in tensors):
            raise ValueError("bond dimension exceeds chi_max")
        if self.mode is EncodingMode.DIRECT_POSITIVE and any(np.any(t < 0) for t in tensors):
            raise ValueError("direct-positive mode requires nonnegative entries")
        for t in tensors:
            t.flags.writeable = False
        object.__setattr__(self, "tensors", tensors)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> tuple[int, ...]:
        """Bond sizes ``(chi_0, chi_1, ..., chi_N)`` including boundaries."""
        return (1,) + tuple(t.shape[2] for t in self.tensors)


def random_init(n_sites: int, chi: int, mode: EncodingMode, seed) -> Mps:
    """Random MPS with all interior bonds of size ``chi``.

    Amplitude entries are iid uniform on [-1, 1]; direct-positive entries
    iid uniform on (0, 1]. Deterministic for a fixed seed.
    """
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    if chi < 1:
        raise ValueError("chi must be >= 1")
    rng = np.random.default_rng(seed)
    dims = [1] + [chi] * (n_sites - 1) + [1]
    tensors = []
    for i in range(n_sites):
        shape = (dims[i], 2, dims[i + 1])
        if mode is EncodingMode.AMPLITUDE:
            t = rng.uniform(-1.0, 1.0, size=shape)
        else:
            # 1 - U[0,1) lands in (0, 1], keeping entries strictly positive.
            t = 1.0 - rng.random(size=shape)
        tensors.append(t)
    return Mps(tuple(tensors), mode, chi)


def _bits_2d(x, n_sites: int) -> tuple[np.ndarray, bool]:
    """Validate bit input and return it as an int (B, N) array."""
    bits = np.asarray(x)
    single = bits.ndim == 1
    if single:
        bits = bits[None, :]
    if bits.ndim != 2 or bits.shape[1] != n_sites:
        raise ValueError(f"expected bit strings of length {n_sites}, got shape {np.asarray(x).shape}")
    bits = bits.astype(np.intp, copy=False)
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError("bit strings must contain only 0s and 1s")
    return bits, single


def log_partition_function(m: Mps) -> float:
    """log Z by sequential transfer contraction, O(N chi^3).

    Raises :class:`DegenerateModelError` when Z <= 0.
    """
    logscale = 0.0
    if m.mode is EncodingMode.AMPLITUDE:
        env = np.ones((1, 1))
        for t in m.tensors:
            env = np.einsum("ab,asc,bsd->cd", env, t, t, optimize=True)
            scale = np.abs(env).max()
            if scale == 0.0:
                raise DegenerateModelError("partition function is zero")
            env /= scale
            logscale += np.log(scale)
        value = env[0, 0]
    else:
        env = np.ones(1)
        for t in m.tensors:
            env = env @ t.sum(axis=1)
            scale = np.abs(env).max()
            if scale == 0.0:
                raise DegenerateModelError("partition function is zero")
            env /= scale
            logscale += np.log(scale)
        value = env[0]
    if value <= 0.0:
        raise DegenerateModelError("partition function is not positive")
    return logscale + np.log(value)


def partition_function(m: Mps) -> float:
    """Z = sum over all 2^N strings of the encoded (squared) values."""
    return float(np.exp(log_partition_function(m)))


def _log_values(m: Mps, bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-string chain values in log space.

    Returns (log|v|, sign) with sign in {-1, 0, 1}; log|v| is -inf where
    the value is exactly zero.
    """
    n = bits.shape[0]
    vec = np.ones((n, 1))
    logabs = np.zeros(n)
    sign = np.ones(n)
    for i, t in enumerate(m.tensors):
        sel = t[:, bits[:, i], :]  # (chi_l, B, chi_r)
        vec = np.einsum("bl,lbr->br", vec, sel, optimize=True)
        scale = np.abs(vec).max(axis=1)
        dead = scale == 0.0
        sign[dead] = 0.0
        safe = np.where(dead, 1.0, scale)
        vec /= safe[:, None]
        with np.errstate(divide="ignore"):
            logabs += np.where(dead, -np.inf, np.log(safe))
    final = vec[:, 0]
    sign *= np.sign(final)
    with np.errstate(divide="ignore"):
        logabs += np.where(final == 0.0, -np.inf, np.log(np.abs(np.where(final == 0.0, 1.0, final))))
    return logabs, sign


def log_probability(m: Mps, x) -> np.ndarray | float:
    """log p(x); -inf for strings of probability zero.

    Accepts a single length-N bit string or a (B, N) batch.
    """
    bits, single = _bits_2d(x, m.n_sites)
    log_z = log_partition_function(m)
    logabs, sign = _log_values(m, bits)
    if m.mode is EncodingMode.AMPLITUDE:
        logp = 2.0 * logabs - log_z
        logp = np.where(sign == 0.0, -np.inf, logp)
    else:
        # Tiny negative chain values in DIRECT mode are contraction
        # round-off of a mathematically nonnegative function.
        logp = np.where(sign <= 0.0, -np.inf, logabs - log_z)
    return float(logp[0]) if single else logp


def probability(m: Mps, x) -> np.ndarray | float:
    """p(x) in [0, 1] for one bit string or a (B, N) batch."""
    out = np.exp(log_probability(m, x))
    return float(out) if np.isscalar(out) or out.ndim == 0 else out


def _right_sum_envs(m: Mps) -> list[np.ndarray]:
    """Right environments for ancestral sampling, normalized per site.

    Only conditional ratios are used downstream, so each environment can
    be rescaled freely.
    """
    n = m.n_sites
    envs: list[np.ndarray] = [None] * (n + 1)
    if m.mode is EncodingMode.AMPLITUDE:
        envs[n] = np.ones((1, 1))
        for i in range(n - 1, -1, -1):
            t = m.tensors[i]
            env = np.einsum("asb,csd,bd->ac", t, t, envs[i + 1], optimize=True)
            scale = np.abs(env).max()
            if scale == 0.0:
                raise DegenerateModelError("degenerate right environment while sampling")
            envs[i] = env / scale
    else:
        envs[n] = np.ones(1)
        for i in range(n - 1, -1, -1):
            env = m.tensors[i].sum(axis=1) @ envs[i + 1]
            scale = np.abs(env).max()
            if scale == 0.0:
                raise DegenerateModelError("degenerate right environment while sampling")
            envs[i] = env / scale
    return envs


def perfect_sample(m: Mps, rng, size: int | None = None) -> np.ndarray:
    """Exact ancestral sampling via sequential conditional marginals.

    Each returned string x is drawn with probability exactly
    ``probability(m, x)``; there is no Markov chain and no burn-in.

    Args:
        m: model with Z > 0.
        rng: :class:`numpy.random.Generator` or an int seed.
        size: number of samples; ``None`` returns a single (N,) string,
            otherwise a (size, N) array.

    Returns:
        int8 array of bits.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    batch = 1 if size is None else int(size)
    if batch < 1:
        raise ValueError("size must be >= 1")
    envs = _right_sum_envs(m)
    n = m.n_sites
    bits = np.empty((batch, n), dtype=np.int8)

    if m.mode is EncodingMode.AMPLITUDE:
        left = np.ones((batch, 1, 1))
        for i, t in enumerate(m.tensors):
            # site-local kernel (chi_l, chi_l', 2), sample independent
            kernel = np.einsum("ksm,lsn,mn->kls", t, t, envs[i + 1], optimize=True)
            weights = np.einsum("bkl,kls->bs", left, kernel, optimize=True)
            np.maximum(weights, 0.0, out=weights)
            total = weights.sum(axis=1)
            if np.any(total <= 0.0):
                raise DegenerateModelError("zero conditional marginal while sampling")
            drawn = (rng.random(batch) < weights[:, 1] / total).astype(np.int8)
            bits[:, i] = drawn
            sel = t[:, drawn, :]  # (chi_l, B, chi_r)
            half = np.einsum("bkl,kbm->blm", left, sel, optimize=True)
            left = np.einsum("blm,lbn->bmn", half, sel, optimize=True)
            scale = np.abs(left).max(axis=(1, 2))
            if np.any(scale == 0.0):
                raise DegenerateModelError("zero left environment while sampling")
            left /= scale[:, None, None]
    else:
        left = np.ones((batch, 1))
        for i, t in enumerate(m.tensors):
            kernel = np.einsum("lsr,r->ls", t, envs[i + 1], optimize=True)
            weights = left @ kernel  # (B, 2)
            np.maximum(weights, 0.0, out=weights)
            total = weights.sum(axis=1)
            if np.any(total <= 0.0):
                raise DegenerateModelError("zero conditional marginal while sampling")
            drawn = (rng.random(batch) < weights[:, 1] / total).astype(np.int8)
            bits[:, i] = drawn
            sel = t[:, drawn, :]
            left = np.einsum("bl,lbr->br", left, sel, optimize=True)
            scale = np.abs(left).max(axis=1)
            if np.any(scale == 0.0):
                raise DegenerateModelError("zero left environment while sampling")
            left /= scale[:, None]

    return bits[0] if size is None else bits


def apply_diffusion(m: Mps, p_flip: float) -> Mps:
    """Model of "sample, then flip each bit independently with p_flip".

    Contracts the column-stochastic matrix
    ``D = [[1-p, p], [p, 1-p]]`` into every physical leg of the
    probability-space network. For amplitude models the squared network is
    built explicitly first (bond dimension chi^2), so the result encodes
    the diffused distribution exactly; it is returned in DIRECT mode.
    Normalization is preserved.
    """
    if not 0.0 <= p_flip <= 1.0:
        raise ValueError("p_flip must lie in [0, 1]")
    d = np.array([[1.0 - p_flip, p_flip], [p_flip, 1.0 - p_flip]])
    if m.mode is EncodingMode.AMPLITUDE:
        squared = []
        for t in m.tensors:
            chi_l, _, chi_r = t.shape
            p = np.einsum("ayb,cyd->acybd", t, t).reshape(chi_l * chi_l, 2, chi_r * chi_r)
            squared.append(np.einsum("xy,lyr->lxr", d, p))
        return Mps(tuple(squared), EncodingMode.DIRECT, max(m.chi_max**2, 1))
    diffused = tuple(np.einsum("xy,lyr->lxr", d, t) for t in m.tensors)
    return Mps(diffused, m.mode, m.chi_max)


def add_tensor_noise(m: Mps, alpha_noise: float, rng) -> Mps:
    """Perturb every tensor entry with an independent N(0, alpha_noise) draw.

    In direct-positive mode perturbed entries are clamped at 0 to keep the
    encoding valid.
    """
    if alpha_noise < 0:
        raise ValueError("alpha_noise must be >= 0")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    noisy = []
    for t in m.tensors:
        perturbed = t + rng.normal(0.0, alpha_noise, size=t.shape)
        if m.mode is EncodingMode.DIRECT_POSITIVE:
            perturbed = np.maximum(perturbed, 0.0)
        noisy.append(perturbed)
    return Mps(tuple(noisy), m.mode, m.chi_max)


def canonicalize_split(
    theta: np.ndarray,
    chi_max: int | None,
    cutoff: float,
    absorb: str = "right",
) -> tuple[np.ndarray, np.ndarray]:
    """Split a merged two-site tensor back into two sites by truncated SVD.

    Singular values with ``sigma/sigma_max < cutoff`` are discarded and the
    retained rank is capped at ``chi_max``; the reconstruction error equals
    the Frobenius norm of the dropped values.

    Args:
        theta: merged tensor of shape (chi_l, 2, 2, chi_r).
        chi_max: rank cap, or ``None`` for no cap.
        cutoff: relative singular-value cutoff, >= 0.
        absorb: which factor keeps the singular values ("left" or "right");
            the other factor is an isometry.

    Returns:
        (left, right) tensors of shapes (chi_l, 2, k) and (k, 2, chi_r).
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 4 or theta.shape[1] != 2 or theta.shape[2] != 2:
        raise ValueError(f"expected shape (chi_l, 2, 2, chi_r), got {theta.shape}")
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    if absorb not in ("left", "right"):
        raise ValueError("absorb must be 'left' or 'right'")
    chi_l, _, _, chi_r = theta.shape
    mat = theta.reshape(chi_l * 2, 2 * chi_r)
    if not np.any(mat):
        raise DegenerateModelError("cannot split an all-zero tensor")
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    keep = int(np.sum(s >= cutoff * s[0]))
    if chi_max is not None:
        keep = min(keep, int(chi_max))
    keep = max(keep, 1)
    if absorb == "right":
        left = u[:, :keep]
        right = s[:keep, None] * vh[:keep]
    else:
        left = u[:, :keep] * s[:keep]
        right = vh[:keep]
    return left.reshape(chi_l, 2, keep), right.reshape(keep, 2, chi_r)


# --- text dump format (test fixtures) ---------------------------------------
#
#   tneda-mps 1
#   <N> <mode> <chi_max>
#   <chi_0> <chi_1> ... <chi_N>
#   <row-major entries of tensor 0>
#   ...

_FORMAT_HEADER = "tneda-mps 1"


def mps_to_text(m: Mps) -> str:
    lines = [
        _FORMAT_HEADER,
        f"{m.n_sites} {m.mode.value} {m.chi_max}",
        " ".join(str(d) for d in m.bond_dims),
    ]
    for t in m.tensors:
        lines.append(" ".join(repr(float(v)) for v in t.ravel()))
    return "\n".join(lines) + "\n"


def mps_from_text(text: str) -> Mps:
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != _FORMAT_HEADER:
        raise ValueError("not a tneda MPS dump")
    n_str, mode_str, chi_max_str = lines[1].split()
    n, chi_max = int(n_str), int(chi_max_str)
    mode = EncodingMode(mode_str)
    dims = [int(v) for v in lines[2].split()]
    if len(dims) != n + 1:
        raise ValueError("bond list length does not match site count")
    if len(lines) != 3 + n:
        raise ValueError("tensor line count does not match site count")
    tensors = []
    for i in range(n):
        flat = np.array(lines[3 + i].split(), dtype=np.float64)
        tensors.append(flat.reshape(dims[i], 2, dims[i + 1]))
    return Mps(tuple(tensors), mode, chi_max)


def save_mps(m: Mps, path) -> None:
    with open(path, "w") as fh:
        fh.write(mps_to_text(m))


def load_mps(path) -> Mps:
    with open(path) as fh:
        return mps_from_text(fh.read())
