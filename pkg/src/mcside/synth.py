"""Synthetic union-of-subspaces data, noisy side information, sampling and GMM noise.

Ground truth is ``M = A Z B.T`` where the rows of ``B`` (``n x r``) are drawn
from ``S`` random ``d``-dimensional subspaces of ``R^r``.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import read_manifest, read_matrix, read_pattern, write_manifest, write_matrix, write_pattern
from .linalg import SamplingPattern, numerical_rank

RANK_CHECK_TOL = 1e-10


class DegenerateDrawError(RuntimeError):
    pass


@dataclass(frozen=True)
class SubspaceModel:
    S: int
    d: int
    r: int
    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if self.S < 1 or self.d < 1 or self.r < 1:
            raise ValueError("S, d and r must be positive")
        if len(counts) != self.S or min(counts) < 1:
            raise ValueError(f"need {self.S} positive counts, got {counts}")
        if self.d > self.r:
            raise ValueError(f"subspace dimension d = {self.d} exceeds r = {self.r}")

    @property
    def n(self):
        return sum(self.counts)

    @property
    def target_rank(self):
        """Generic rank of ``B`` (and of ``M`` when ``m`` is large enough)."""
        return min(self.S * self.d, self.r, self.n)

    @classmethod
    def even(cls, S, d, r, n):
        """Counts as equal as possible, larger blocks last."""
        base, extra = divmod(n, S)
        counts = [base] * (S - extra) + [base + 1] * extra
        return cls(S, d, r, tuple(counts))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    A: np.ndarray
    Z: np.ndarray
    B: np.ndarray
    labels: np.ndarray
    bases: tuple = field(repr=False)

    @property
    def M(self):
        return self.A @ self.Z @ self.B.T


def _rank(A):
    return numerical_rank(np.linalg.svd(A, compute_uv=False), RANK_CHECK_TOL)


def generate_ground_truth(model, m, seed, max_retries=10):
    """Draw ``A``, ``Z``, ``B`` for a union-of-subspaces model.

    Subspace bases are orthonormalised Gaussian ``r x d`` frames; each of the
    ``N_s`` rows of block ``s`` is the basis times a standard Gaussian
    coefficient vector. ``A`` and ``Z`` have i.i.d. standard normal entries.
    Degenerate draws (``Z`` singular or ``rank(M)`` below target) are redrawn.
    """
    rng = np.random.default_rng(seed)
    target = min(model.target_rank, m)
    for _ in range(max_retries):
        bases = tuple(np.linalg.qr(rng.standard_normal((model.r, model.d)))[0] for _ in range(model.S))
        blocks = [(Q @ rng.standard_normal((model.d, N))).T for Q, N in zip(bases, model.counts)]
        B = np.vstack(blocks)
        labels = np.repeat(np.arange(model.S), model.counts)
        A = rng.standard_normal((m, model.r))
        Z = rng.standard_normal((model.r, model.r))
        if _rank(Z) < model.r:
            continue
        gt = GroundTruth(A, Z, B, labels, bases)
        if _rank(gt.M) == target:
            return gt
    raise DegenerateDrawError(f"no non-degenerate draw in {max_retries} attempts")


def snr_db(signal, noise):
    """``10 log10(||signal||_F^2 / ||noise||_F^2)``."""
    return 10.0 * np.log10(np.vdot(signal, signal) / np.vdot(noise, noise))


def add_model_noise(B, snr, seed):
    """``B + N`` with white Gaussian ``N`` rescaled so the realised SNR is exactly ``snr`` dB."""
    B = np.asarray(B, dtype=np.float64)
    if np.isposinf(snr):
        return B.copy()
    rng = np.random.default_rng(seed)
    N = rng.standard_normal(B.shape)
    N *= np.linalg.norm(B) / (np.linalg.norm(N) * 10.0 ** (snr / 20.0))
    return B + N


def sample_pattern(m, n, p, seed):
    """I.i.d. Bernoulli(``p``) observation mask."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p = {p} outside [0, 1]")
    rng = np.random.default_rng(seed)
    return SamplingPattern(rng.random((m, n)) < p)


@dataclass(frozen=True)
class GmmNoise:
    """Two-component Gaussian mixture applied to a random subset of observed entries.

    ``variances`` are the unscaled values; :func:`measurement_noise` rescales
    variances by a common factor (and means by its square root) to hit a
    target SNR.
    """

    weights: tuple = (0.3, 0.7)
    means: tuple = (0.1, -0.2)
    variances: tuple = (1.0, 0.01)
    probability: float = 0.2

    def __post_init__(self):
        if len(self.weights) != 2 or abs(sum(self.weights) - 1.0) > 1e-12 or min(self.weights) < 0:
            raise ValueError("weights must be two nonnegative numbers summing to 1")
        if min(self.variances) <= 0:
            raise ValueError("variances must be positive")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")

    @property
    def mean(self):
        return float(np.dot(self.weights, self.means))

    def sample(self, size, rng):
        rng = np.random.default_rng(rng)
        comp = rng.random(size) >= self.weights[0]
        mu = np.where(comp, self.means[1], self.means[0])
        sd = np.sqrt(np.where(comp, self.variances[1], self.variances[0]))
        return mu + sd * rng.standard_normal(size)


def measurement_noise(M_obs, pattern, gmm, target_snr_db, seed, reference_power=None):
    """Impulsive noise on observed entries scaled to a target measurement SNR.

    Each observed entry is corrupted independently with probability
    ``gmm.probability``. The draws are scaled by ``sqrt(f)`` (variances by
    ``f``) so that ``10 log10(P / ||noise||^2) = target_snr_db`` where ``P`` is
    ``||P_Omega(M)||_F^2`` unless ``reference_power`` is given.

    Returns
    -------
    noise : ndarray
        Zero outside the corrupted entries.
    factor : float
        The variance scale ``f``; ``0.0`` when no entry was corrupted.
    """
    mask = pattern.mask
    rng = np.random.default_rng(seed)
    hit = mask & (rng.random(mask.shape) < gmm.probability)
    raw = np.zeros(mask.shape)
    raw[hit] = gmm.sample(int(np.count_nonzero(hit)), rng)
    raw_power = float(np.vdot(raw, raw))
    if raw_power == 0.0:
        return raw, 0.0
    if reference_power is None:
        obs = np.where(mask, M_obs, 0.0)
        reference_power = float(np.vdot(obs, obs))
    factor = reference_power / (raw_power * 10.0 ** (target_snr_db / 10.0))
    return raw * np.sqrt(factor), factor


def add_measurement_noise(M_obs, pattern, gmm, target_snr_db, seed, reference_power=None):
    noise, _ = measurement_noise(M_obs, pattern, gmm, target_snr_db, seed, reference_power)
    return np.where(pattern.mask, M_obs, 0.0) + noise


@dataclass(frozen=True, eq=False)
class Dataset:
    """Everything one trial needs, plus the generating parameters."""

    truth: GroundTruth
    Bprime: np.ndarray
    Aprime: np.ndarray
    pattern: SamplingPattern
    observed: np.ndarray
    manifest: dict

    @property
    def M(self):
        return self.truth.M


def save_bundle(directory, data):
    """Write a dataset as text matrices, a pattern file and ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    t = data.truth
    for name, arr in (("M", t.M), ("A", t.A), ("B", t.B), ("Z", t.Z), ("Bprime", data.Bprime),
                      ("Aprime", data.Aprime), ("observed", data.observed)):
        write_matrix(d / f"{name}.txt", arr)
    write_matrix(d / "labels.txt", t.labels[None, :].astype(float))
    write_pattern(d / "pattern.txt", data.pattern)
    write_manifest(d / "manifest.json", data.manifest)


def load_bundle(directory):
    d = Path(directory)
    labels = read_matrix(d / "labels.txt")[0].astype(int)
    truth = GroundTruth(read_matrix(d / "A.txt"), read_matrix(d / "Z.txt"), read_matrix(d / "B.txt"), labels, ())
    return Dataset(
        truth,
        read_matrix(d / "Bprime.txt"),
        read_matrix(d / "Aprime.txt"),
        read_pattern(d / "pattern.txt"),
        read_matrix(d / "observed.txt"),
        read_manifest(d / "manifest.json"),
    )
