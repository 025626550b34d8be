"""L2 clipping of latent vectors and calibrated Laplace / Gaussian noise.

A latent ``r`` is released as ``clip(r, C) + eta``.  After clipping every
latent sits in the L2 ball of radius ``C``, so two latents differ by at most
``2C`` in L2 norm.  In L1 norm that ball has diameter ``2C*sqrt(d)``; the
``"paper"`` sensitivity mode uses ``2C`` regardless of ``d`` (exact only at
``d == 1``) while ``"corrected"`` uses the true L1 diameter.  Gaussian noise
always uses the L2 diameter ``2C``.

Decoding the noisy latent is post-processing, so the (epsilon, delta) of the
latent release is the budget of the whole text transformation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from adept.errors import ConfigError, ContractError, DimensionError

LAPLACE = "laplace"
GAUSSIAN = "gaussian"
DEFAULT_DELTA = 1e-5
_TWO53 = float(2**53)


@dataclass(frozen=True)
class PrivacySpec:
    """Noise configuration for one release.

    Exactly one of ``epsilon`` (by-epsilon calibration) or ``variance``
    (per-coordinate noise variance) is set.
    """

    dim: int
    clip_radius: float = 1.0
    noise_family: str = GAUSSIAN
    epsilon: float | None = None
    delta: float | None = None
    variance: float | None = None
    sensitivity_mode: str | None = None

    def __post_init__(self):
        fam = self.noise_family.lower()
        object.__setattr__(self, "noise_family", fam)
        if fam not in (LAPLACE, GAUSSIAN):
            raise ConfigError(f"noise family must be laplace or gaussian, got {self.noise_family!r}")
        if self.sensitivity_mode is None:
            object.__setattr__(self, "sensitivity_mode", "corrected")
        if self.sensitivity_mode not in ("paper", "corrected"):
            raise ConfigError(f"sensitivity mode must be paper or corrected, got {self.sensitivity_mode!r}")
        if self.dim < 1:
            raise ConfigError(f"dimension must be positive, got {self.dim}")
        if not self.clip_radius > 0:
            raise ConfigError(f"clip radius must be positive, got {self.clip_radius}")
        if (self.epsilon is None) == (self.variance is None):
            raise ConfigError("set exactly one of epsilon or variance")
        if self.variance is not None and not self.variance > 0:
            raise ConfigError(f"variance must be positive, got {self.variance}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if fam == LAPLACE:
            if self.delta not in (None, 0, 0.0):
                raise ConfigError("the Laplace mechanism is (epsilon, 0)-DP; delta must be 0")
            object.__setattr__(self, "delta", 0.0)
        else:
            if self.delta is None:
                object.__setattr__(self, "delta", DEFAULT_DELTA)
            if self.epsilon is not None and not 0 < self.delta < 1:
                raise ConfigError(f"Gaussian calibration needs delta in (0, 1), got {self.delta}")
            if self.epsilon is not None and self.epsilon > 1:
                raise ConfigError(f"the classical Gaussian bound needs epsilon <= 1, got {self.epsilon}")

    @property
    def by_epsilon(self) -> bool:
        return self.epsilon is not None

    def l1_sensitivity(self) -> float:
        base = 2.0 * self.clip_radius
        return base if self.sensitivity_mode == "paper" else base * math.sqrt(self.dim)

    def l2_sensitivity(self) -> float:
        return 2.0 * self.clip_radius

    def noise_variance(self) -> float:
        """Per-coordinate variance of the added noise."""
        if not self.by_epsilon:
            return self.variance
        if self.noise_family == LAPLACE:
            return 2.0 * laplace_scale(self) ** 2
        return gaussian_sigma(self) ** 2

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "PrivacySpec":
        return cls(**d)

    def label(self) -> str:
        knob = f"eps={self.epsilon:g}" if self.by_epsilon else f"var={self.variance:g}"
        return f"{self.noise_family}-{knob}"


# -- clipping ----------------------------------------------------------------
def clip_to_ball(r, clip_radius: float) -> np.ndarray:
    """``r * min(1, C / ||r||_2)``; zero stays zero."""
    if not clip_radius > 0:
        raise ContractError(f"clip radius must be positive, got {clip_radius}")
    r = np.asarray(r, dtype=np.float64)
    if not np.isfinite(r).all():
        raise ContractError("cannot clip a non-finite vector")
    norm = float(np.linalg.norm(r))
    if norm <= clip_radius:
        return r.copy()
    return clip_batch(r[None, :], clip_radius)[0]


def clip_batch(rs, clip_radius: float) -> np.ndarray:
    """Row-wise :func:`clip_to_ball` for an ``(n, d)`` array."""
    rs = np.asarray(rs, dtype=np.float64)
    if not np.isfinite(rs).all():
        raise ContractError("cannot clip a non-finite vector")
    norms = np.linalg.norm(rs, axis=1, keepdims=True)
    over = norms > clip_radius
    scale = np.where(over, clip_radius / np.where(norms > 0, norms, 1.0), 1.0)
    out = rs * scale
    # rounding can leave a scaled row an ulp outside the ball; shrink until it
    # is inside so that clipping is exactly idempotent
    bad = over[:, 0] & _outside(out, clip_radius)
    while bad.any():
        scale[bad] = np.nextafter(scale[bad], 0.0)
        out[bad] = rs[bad] * scale[bad]
        bad = bad & _outside(out, clip_radius)
    return out


def _outside(rs, clip_radius):
    # numpy's row-wise and single-vector norms round differently; a clipped
    # row must pass both
    batch = np.linalg.norm(rs, axis=1) > clip_radius
    single = np.array([np.linalg.norm(r) > clip_radius for r in rs], dtype=bool)
    return batch | single


# -- calibration ---------------------------------------------------------------
def laplace_scale(spec: PrivacySpec) -> float:
    """Per-coordinate Laplace scale ``b`` (density ``exp(-|x|/b) / 2b``)."""
    if spec.noise_family != LAPLACE:
        raise ContractError("laplace_scale needs a Laplace spec")
    if spec.by_epsilon:
        return spec.l1_sensitivity() / spec.epsilon
    return math.sqrt(spec.variance / 2.0)


def gaussian_sigma(spec: PrivacySpec) -> float:
    """Per-coordinate standard deviation for the Gaussian mechanism.

    By epsilon this is the classical bound ``sigma = Delta2 * sqrt(2 ln(1.25/delta)) / eps``,
    valid for ``eps <= 1``.
    """
    if spec.noise_family != GAUSSIAN:
        raise ContractError("gaussian_sigma needs a Gaussian spec")
    if not spec.by_epsilon:
        return math.sqrt(spec.variance)
    if not 0 < spec.delta < 1:
        raise ContractError(f"delta must lie in (0, 1), got {spec.delta}")
    if spec.epsilon > 1:
        raise ContractError(f"the classical Gaussian bound needs epsilon <= 1, got {spec.epsilon}")
    return spec.l2_sensitivity() * math.sqrt(2.0 * math.log(1.25 / spec.delta)) / spec.epsilon


def effective_epsilon(spec: PrivacySpec) -> tuple:
    """(epsilon, delta) implied by this spec's noise level."""
    if spec.by_epsilon:
        return spec.epsilon, spec.delta
    if spec.noise_family == LAPLACE:
        return spec.l1_sensitivity() / laplace_scale(spec), 0.0
    sigma = gaussian_sigma(spec)
    return spec.l2_sensitivity() * math.sqrt(2.0 * math.log(1.25 / spec.delta)) / sigma, spec.delta


# -- sampling ------------------------------------------------------------------
def _open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    # (k + 0.5) / 2^53 is strictly inside (0, 1)
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) / _TWO53


def laplace_noise(rng: np.random.Generator, scale: float, size) -> np.ndarray:
    """Inverse-CDF Laplace sampling from the generator's integer stream."""
    p = _open_uniform(rng, size)
    return np.where(p < 0.5, scale * np.log(2.0 * p), -scale * np.log(2.0 - 2.0 * p))


def sample_noise(spec: PrivacySpec, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """i.i.d. noise of length ``spec.dim`` (or shape ``(n, dim)``)."""
    size = spec.dim if n is None else (n, spec.dim)
    if spec.noise_family == LAPLACE:
        return laplace_noise(rng, laplace_scale(spec), size)
    return gaussian_sigma(spec) * rng.standard_normal(size)


def privatize(r, spec: PrivacySpec, rng: np.random.Generator) -> np.ndarray:
    """Clip ``r`` to the ball of radius C and add one noise draw."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (spec.dim,):
        raise DimensionError(f"latent has shape {r.shape}, spec expects ({spec.dim},)")
    return clip_to_ball(r, spec.clip_radius) + sample_noise(spec, rng)


def record_rng(base_seed: int, index: int) -> np.random.Generator:
    """Generator for record ``index`` (seed = base + index, PCG64)."""
    return np.random.Generator(np.random.PCG64(base_seed + index))


# -- empirical verification ----------------------------------------------------------
def empirical_dp_check(
    spec: PrivacySpec,
    u1: float,
    u2: float,
    n: int = 1_000_000,
    bins: int = 20,
    min_hits: int = 100,
    seed: int = 0,
    tail: float = 0.05,
) -> float:
    """Histogram estimate of ``max |log P(M(u1) in B) / P(M(u2) in B)|``.

    Both inputs are privatised ``n`` times.  Outputs are binned on a shared
    equal-width grid spanning the pooled ``tail`` and ``1 - tail`` quantiles;
    only bins with at least ``min_hits`` samples from both inputs count.
    """
    if spec.dim != 1:
        raise ContractError("empirical_dp_check works on one-dimensional specs")
    if spec.noise_family != LAPLACE or not spec.by_epsilon:
        raise ContractError("empirical_dp_check needs a Laplace spec calibrated by epsilon")
    if n < 100_000:
        raise ContractError(f"n={n} is too small for a meaningful estimate (need >= 1e5)")
    rng = np.random.Generator(np.random.PCG64(seed))
    c1 = clip_to_ball([u1], spec.clip_radius)[0]
    c2 = clip_to_ball([u2], spec.clip_radius)[0]
    x1 = c1 + sample_noise(spec, rng, n)[:, 0]
    x2 = c2 + sample_noise(spec, rng, n)[:, 0]
    lo, hi = np.quantile(np.concatenate([x1, x2]), [tail, 1.0 - tail])
    edges = np.linspace(lo, hi, bins + 1)
    h1, _ = np.histogram(x1, edges)
    h2, _ = np.histogram(x2, edges)
    ok = (h1 >= min_hits) & (h2 >= min_hits)
    if not ok.any():
        raise ContractError("no bin has enough samples; lower bins or raise n")
    return float(np.max(np.abs(np.log(h1[ok] / h2[ok]))))
