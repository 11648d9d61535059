"""Joint detection and tracking of a single target in clutter.

Data association indicators are sampled by sequential importance resampling
while the conditionally linear-Gaussian target state is handled analytically
by per-particle Kalman filtering. Association indicator 0 means clutter,
1 means the target.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .gaussian import (
    GaussianEstimate,
    MeasurementModel,
    MotionModel,
    _batch_innovation,
    _batch_likelihood,
    _batch_predict,
    _batch_update,
    symmetrize,
)

__all__ = [
    "Particle",
    "ParticleSet",
    "ClutterModel",
    "AssociationPrior",
    "association_posterior",
    "rbpf_step",
    "rbpf_predict",
    "effective_sample_size",
    "resample",
    "point_estimate",
    "initial_particle_set",
]

_WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ClutterModel:
    """Uniform clutter over a measurement space of volume V.

    clutter_rate is the expected number of false measurements per scan
    (used by simulators; the association likelihood only needs 1/V).
    """

    volume: float
    clutter_rate: float = 0.0

    def __post_init__(self):
        if not self.volume > 0:
            raise ValueError("volume must be positive")
        if self.clutter_rate < 0:
            raise ValueError("clutter_rate must be nonnegative")

    @property
    def density(self) -> float:
        return 1.0 / self.volume


class AssociationPrior:
    """Prior P(c_k = j | last m associations), evaluated over a candidate set.

    weight_fn maps (candidates array, history tuple) to unnormalized weights;
    probabilities() normalizes over the candidates actually offered.
    """

    def __init__(self, weight_fn: Callable[[np.ndarray, tuple], np.ndarray], order: int = 1):
        if order < 0:
            raise ValueError("order must be nonnegative")
        self.weight_fn = weight_fn
        self.order = order

    def probabilities(self, candidates: Sequence[int], history: tuple) -> np.ndarray:
        cands = np.asarray(candidates, dtype=int)
        w = np.asarray(self.weight_fn(cands, history), dtype=float)
        if w.shape != cands.shape or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("association prior produced invalid weights")
        total = w.sum()
        if total <= 0:
            raise ValueError("association prior assigns zero mass to every candidate")
        return w / total

    @classmethod
    def uniform(cls, order: int = 1) -> "AssociationPrior":
        return cls(lambda cands, hist: np.ones(len(cands)), order)

    @classmethod
    def markov(cls, matrix, order: int = 1) -> "AssociationPrior":
        """First-order chain over {0, 1}: matrix[prev][next].

        With an empty history the matrix rows are averaged.
        """
        m = np.asarray(matrix, dtype=float)
        if m.shape != (2, 2) or np.any(m < 0):
            raise ValueError("markov prior needs a nonnegative 2x2 matrix")

        def weight_fn(cands: np.ndarray, history: tuple) -> np.ndarray:
            row = m[history[-1]] if history else m.mean(axis=0)
            return row[cands]

        return cls(weight_fn, order)

    @classmethod
    def fixed(cls, probs, order: int = 1) -> "AssociationPrior":
        """History-independent weights indexed by candidate value."""
        p = np.asarray(probs, dtype=float)

        def weight_fn(cands: np.ndarray, history: tuple) -> np.ndarray:
            return p[cands]

        return cls(weight_fn, order)


@dataclass(frozen=True)
class Particle:
    """One association hypothesis: recent indicators, Gaussian state, weight."""

    history: tuple
    est: GaussianEstimate
    weight: float

    def __post_init__(self):
        if not np.isfinite(self.weight) or self.weight < 0:
            raise ValueError("particle weight must be finite and nonnegative")
        object.__setattr__(self, "history", tuple(int(c) for c in self.history))


@dataclass(frozen=True)
class ParticleSet:
    particles: tuple
    order: int = 1

    def __post_init__(self):
        particles = tuple(self.particles)
        if not particles:
            raise ValueError("particle set must hold at least one particle")
        object.__setattr__(self, "particles", particles)

    def __len__(self) -> int:
        return len(self.particles)

    @property
    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.particles])

    def check_normalized(self):
        if abs(self.weights.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError("particle weights are not normalized")


def initial_particle_set(prior: GaussianEstimate, n_particles: int, order: int = 1) -> ParticleSet:
    """N identical particles at the prior with uniform weights."""
    if n_particles < 1:
        raise ValueError("need at least one particle")
    w = 1.0 / n_particles
    particles = tuple(Particle((), prior, w) for _ in range(n_particles))
    return ParticleSet(particles, order)


def _push_history(history: tuple, c: int, order: int) -> tuple:
    if order == 0:
        return ()
    return (history + (c,))[-order:]


def association_posterior(
    particle: Particle,
    y,
    meas: MeasurementModel,
    clutter: ClutterModel,
    prior: AssociationPrior,
) -> tuple:
    """Posterior (pi_0, pi_1) over {clutter, target} for one measurement.

    particle.est must already hold the predicted Gaussian for this step.
    """
    from .gaussian import kf_likelihood

    lik = np.array([clutter.density, kf_likelihood(particle.est, y, meas)])
    pr = prior.probabilities([0, 1], particle.history)
    unnorm = lik * pr
    total = unnorm.sum()
    if total <= 0:
        raise ValueError("both association hypotheses have zero posterior mass")
    pi0 = float(unnorm[0] / total)
    return pi0, 1.0 - pi0


def effective_sample_size(pset: ParticleSet) -> float:
    """1 / sum(w^2); ranges from 1 (degenerate) to N (uniform)."""
    w = pset.weights
    return float(1.0 / np.sum(w * w))


def _systematic_indices(weights: np.ndarray, offset: float) -> np.ndarray:
    """Systematic resampling grid u/N + k/N against the weight CDF."""
    n = len(weights)
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    positions = (offset + np.arange(n)) / n
    return np.searchsorted(cum, positions, side="right")


def resample(pset, threshold_fraction: float, rng_seed):
    """Systematic resampling when ESS drops below threshold_fraction * N.

    Returns the input unchanged when the threshold is not crossed;
    resampled particles carry uniform weights. Works on any particle-set
    type whose particles are dataclasses with a weight field.
    """
    n = len(pset)
    if effective_sample_size(pset) >= threshold_fraction * n:
        return pset
    rng = np.random.default_rng(rng_seed)
    offset = rng.uniform()
    idx = _systematic_indices(pset.weights, offset)
    w = 1.0 / n
    particles = tuple(replace(pset.particles[i], weight=w) for i in idx)
    return type(pset)(particles, pset.order)


def point_estimate(pset: ParticleSet) -> GaussianEstimate:
    """Moment-matched Gaussian of the weighted particle mixture."""
    w = pset.weights
    means = np.stack([p.est.mean for p in pset.particles])
    covs = np.stack([p.est.cov for p in pset.particles])
    mean = w @ means
    dev = means - mean
    cov = np.einsum("i,ijk->jk", w, covs) + np.einsum("i,ij,ik->jk", w, dev, dev)
    return GaussianEstimate(mean, symmetrize(cov))


def rbpf_predict(pset: ParticleSet, motion: MotionModel) -> ParticleSet:
    """Kalman prediction of every particle; weights untouched.

    Used on its own for scans that carry no measurement.
    """
    means = np.stack([p.est.mean for p in pset.particles])
    covs = np.stack([p.est.cov for p in pset.particles])
    pred_means, pred_covs = _batch_predict(means, covs, motion.A, motion.Q)
    particles = tuple(
        Particle(
            p.history,
            GaussianEstimate._unchecked(pred_means[i], pred_covs[i]),
            p.weight,
        )
        for i, p in enumerate(pset.particles)
    )
    return ParticleSet(particles, pset.order)


def rbpf_step(
    pset: ParticleSet,
    y,
    motion: MotionModel,
    meas: MeasurementModel,
    clutter: ClutterModel,
    prior: AssociationPrior,
    rng_seed,
    proposal: Optional[AssociationPrior] = None,
) -> ParticleSet:
    """One filter step: predict, sample associations, reweight, update.

    Per particle: Kalman prediction; association c sampled from the proposal
    (default: the optimal importance distribution, i.e. the association
    posterior); the weight is multiplied by likelihood * prior / proposal,
    which for the optimal proposal equals the per-particle evidence; the
    Kalman update runs only for c = 1, a clutter association keeps the
    predicted Gaussian as the posterior. Weights are renormalized.
    Deterministic given rng_seed.
    """
    pset.check_normalized()
    y = np.asarray(y, dtype=float).reshape(-1)
    n = len(pset)

    means = np.stack([p.est.mean for p in pset.particles])
    covs = np.stack([p.est.cov for p in pset.particles])

    # Prediction and target likelihood N(y; H m, H P H' + R), stacked.
    pred_means, pred_covs = _batch_predict(means, covs, motion.A, motion.Q)
    innovations, pht, s = _batch_innovation(pred_means, pred_covs, y, meas.H, meas.R)
    target_lik = _batch_likelihood(s, innovations, y.size)

    # Posterior Kalman quantities for the c = 1 branch, stacked.
    upd_means, upd_covs = _batch_update(pred_means, pred_covs, innovations, pht, s)

    rng = np.random.default_rng(rng_seed)
    uniforms = rng.uniform(size=n)

    particles = []
    new_weights = np.empty(n)
    for i, p in enumerate(pset.particles):
        lik = np.array([clutter.density, target_lik[i]])
        pr = prior.probabilities([0, 1], p.history)
        unnorm = lik * pr
        evidence = unnorm.sum()
        if evidence <= 0:
            raise ValueError("both association hypotheses have zero posterior mass")
        if proposal is None:
            prop = unnorm / evidence
        else:
            prop = proposal.probabilities([0, 1], p.history)
        c = 1 if uniforms[i] >= prop[0] else 0
        if prop[c] <= 0:
            raise ValueError("proposal assigned zero probability to the sampled association")
        new_weights[i] = p.weight * lik[c] * pr[c] / prop[c]
        if c == 1:
            est = GaussianEstimate._unchecked(upd_means[i], upd_covs[i])
        else:
            est = GaussianEstimate._unchecked(pred_means[i], pred_covs[i])
        particles.append((_push_history(p.history, c, pset.order), est))

    total = new_weights.sum()
    if total <= 0 or not np.isfinite(total):
        raise ValueError("all particle weights underflowed to zero")
    new_weights /= total
    out = tuple(
        Particle(hist, est, w) for (hist, est), w in zip(particles, new_weights)
    )
    return ParticleSet(out, pset.order)
