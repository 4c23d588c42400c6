"""MPOI distribution and the probability that an observation pose also permits manipulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TruncationStarved
from .geom import Mpoi, Troi
from .reach import Annulus

MAX_REJECTIONS = 1_000_000
_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_stream(*parts: int) -> int:
    """Stable 64-bit stream id from a tuple of integers."""
    h = 0x243F6A8885A308D3
    for p in parts:
        h = splitmix64(h ^ (p & _MASK64))
    return h


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed & _MASK64, spawn_key=(self.stream_id & _MASK64,))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class MpoiDistribution:
    mean: np.ndarray
    covariance: np.ndarray
    truncate_to_troi: bool = False

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.covariance, dtype=float).reshape(2, 2)
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance must be symmetric")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def from_troi(cls, troi: Troi, sigma_exponent: int = 1, truncate: bool = False) -> "MpoiDistribution":
        """Isotropic prior centred on the TROI with covariance ``r_w ** sigma_exponent * I``."""
        return cls(troi.xy, troi.radius**sigma_exponent * np.eye(2), truncate)

    def density(self, pts: np.ndarray) -> np.ndarray:
        """Untruncated Gaussian density at (..., 2) points."""
        d = pts - self.mean
        inv = np.linalg.inv(self.covariance)
        q = np.einsum("...i,ij,...j->...", d, inv, d)
        return np.exp(-0.5 * q) / (2 * np.pi * np.sqrt(np.linalg.det(self.covariance)))


def sample_mpoi_batch(dist: MpoiDistribution, troi: Troi, rng: RngStream | np.random.Generator, n: int) -> np.ndarray:
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    L = np.linalg.cholesky(dist.covariance)
    if not dist.truncate_to_troi:
        return dist.mean + gen.standard_normal((n, 2)) @ L.T
    out = np.empty((0, 2))
    rejected = 0
    r2 = troi.radius**2
    while len(out) < n:
        batch = dist.mean + gen.standard_normal((max(2 * (n - len(out)), 64), 2)) @ L.T
        d = batch - troi.xy
        keep = np.einsum("ij,ij->i", d, d) <= r2
        rejected += int((~keep).sum())
        if rejected > MAX_REJECTIONS:
            raise TruncationStarved(f"more than {MAX_REJECTIONS} rejections while sampling inside the TROI")
        out = np.vstack([out, batch[keep]])
    return out[:n]


def sample_mpoi(dist: MpoiDistribution, troi: Troi, rng: RngStream | np.random.Generator) -> Mpoi:
    return Mpoi(tuple(sample_mpoi_batch(dist, troi, rng, 1)[0]))


def membership_fraction(bodies: np.ndarray, samples: np.ndarray, shape: Annulus) -> np.ndarray:
    """Fraction of samples s with ``bodies[i]`` inside ``shape`` re-centred on s.

    Exact shortcut: bodies whose distance band from the sample cloud lies
    wholly inside or wholly outside the annulus skip the per-sample test.
    """
    bodies = np.atleast_2d(np.asarray(bodies, dtype=float))
    if shape.empty or len(samples) == 0:
        return np.zeros(len(bodies))
    c = samples.mean(axis=0)
    spread = float(np.sqrt(np.max(np.sum((samples - c) ** 2, axis=1))))
    dc = np.hypot(bodies[:, 0] - c[0], bodies[:, 1] - c[1])
    out = np.zeros(len(bodies))
    sure_in = (dc - spread >= shape.r_inner) & (dc + spread <= shape.r_outer)
    sure_out = (dc - spread > shape.r_outer) | (dc + spread < shape.r_inner)
    out[sure_in] = 1.0
    todo = np.flatnonzero(~(sure_in | sure_out))
    lo2, hi2 = shape.r_inner**2, shape.r_outer**2
    # squared distances as |b|^2 + |s|^2 - 2 b.s, in coordinates centred on the cloud
    s_loc = samples - c
    s_sq = np.einsum("ij,ij->i", s_loc, s_loc)
    m2_sT = -2.0 * s_loc.T
    for chunk in np.array_split(todo, max(1, len(todo) // 256)):
        if len(chunk) == 0:
            continue
        b_loc = bodies[chunk] - c
        d2 = b_loc @ m2_sT
        d2 += s_sq
        d2 += np.einsum("ij,ij->i", b_loc, b_loc)[:, None]
        out[chunk] = np.count_nonzero((d2 >= lo2) & (d2 <= hi2), axis=1) / len(samples)
    return out


def p_feasible(body, dist: MpoiDistribution, troi: Troi, rm_of, n_samples: int, rng: RngStream) -> float:
    """Monte Carlo estimate of P(body in R_m(X)) for X drawn from ``dist``.

    ``rm_of`` is either a callable mapping a ground point to its R_m annulus
    or an :class:`Annulus` whose shape is translated to every sample.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    samples = sample_mpoi_batch(dist, troi, rng, n_samples)
    xy = np.array([body.x, body.y]) if hasattr(body, "x") else np.asarray(body, dtype=float)
    if isinstance(rm_of, Annulus):
        return float(membership_fraction(xy[None, :], samples, rm_of)[0])
    hits = sum(bool(rm_of(s).contains(xy)) for s in samples)
    return hits / n_samples
