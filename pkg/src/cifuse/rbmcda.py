"""Joint detection and tracking with an unknown, varying number of targets.

Extends the one-target filter with per-measurement birth events, gamma
lifetime deaths, and association sampling over {clutter, existing targets,
newborn target}. Each particle keeps only its visible targets; the slot pool
is conceptually unbounded (capped at max_targets), with every invisible slot
sitting at the birth prior, so removing a dead target and moving its slot to
the end reduces to dropping it from the list.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammainc

from .gaussian import (
    GaussianEstimate,
    MeasurementModel,
    MotionModel,
    _batch_innovation,
    _batch_likelihood,
    _batch_predict,
    _batch_update,
    kf_likelihood,
    kf_update,
)
from .rbpf import AssociationPrior, ClutterModel, resample

__all__ = [
    "TargetTrack",
    "MultiTargetParticle",
    "MultiTargetParticleSet",
    "BirthDeathModel",
    "birth_assoc_prior",
    "death_probability",
    "apply_deaths",
    "rbmcda_step",
    "rbmcda_predict",
    "extract_tracks",
    "initial_multi_target_set",
]


@dataclass(frozen=True)
class BirthDeathModel:
    """Birth probability per measurement and gamma target lifetime.

    lifetime_shape/lifetime_scale are the gamma shape alpha and scale beta
    (mean lifetime alpha * beta). max_targets caps the visible slot count;
    the birth branch is excluded once the cap is reached.
    """

    p_birth: float
    lifetime_shape: float
    lifetime_scale: float
    max_targets: int = 20

    def __post_init__(self):
        if not 0.0 <= self.p_birth <= 1.0:
            raise ValueError("p_birth must lie in [0, 1]")
        if self.lifetime_shape <= 0 or self.lifetime_scale <= 0:
            raise ValueError("lifetime shape and scale must be positive")
        if self.max_targets < 1:
            raise ValueError("max_targets must be at least 1")

    def lifetime_cdf(self, t):
        return gammainc(self.lifetime_shape, np.maximum(t, 0.0) / self.lifetime_scale)


@dataclass(frozen=True)
class TargetTrack:
    """One visible target inside a particle."""

    est: GaussianEstimate
    last_assoc_time: float
    target_id: int


@dataclass(frozen=True)
class MultiTargetParticle:
    """Association history, visible targets, and importance weight.

    The visibility vector over the slot pool is [True] * len(tracks) followed
    by False for every pooled slot, so target_count is just len(tracks).
    """

    history: tuple
    tracks: tuple
    weight: float

    def __post_init__(self):
        if not np.isfinite(self.weight) or self.weight < 0:
            raise ValueError("particle weight must be finite and nonnegative")
        tracks = tuple(self.tracks)
        ids = [t.target_id for t in tracks]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate target ids within a particle")
        object.__setattr__(self, "history", tuple(int(c) for c in self.history))
        object.__setattr__(self, "tracks", tracks)

    @property
    def target_count(self) -> int:
        return len(self.tracks)


@dataclass(frozen=True)
class MultiTargetParticleSet:
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


def initial_multi_target_set(n_particles: int, order: int = 1) -> MultiTargetParticleSet:
    """N empty-scene particles with uniform weights."""
    if n_particles < 1:
        raise ValueError("need at least one particle")
    w = 1.0 / n_particles
    particles = tuple(MultiTargetParticle((), (), w) for _ in range(n_particles))
    return MultiTargetParticleSet(particles, order)


def birth_assoc_prior(
    history: tuple,
    t_count: int,
    model: BirthDeathModel,
    assoc_prior: AssociationPrior,
) -> dict:
    """Joint prior over (birth, association) pairs for one measurement.

    Mass p_birth sits on (birth, c = T + 1); the remaining (1 - p_birth) is
    spread over (no birth, c in {0..T}) by the association prior. With the
    slot cap reached the birth branch is dropped and the rest renormalized.
    """
    candidates = list(range(t_count + 1))
    no_birth = assoc_prior.probabilities(candidates, history)
    dist = {}
    if t_count < model.max_targets:
        dist[(True, t_count + 1)] = model.p_birth
        scale = 1.0 - model.p_birth
    else:
        scale = 1.0
    for j, pr in zip(candidates, no_birth):
        dist[(False, j)] = scale * pr
    return dist


def death_probability(t_now: float, t_prev: float, tau_last: float, model: BirthDeathModel) -> float:
    """Probability the target dies in (t_prev, t_now], given alive at t_prev.

    Both times are measured from the last association at tau_last against the
    gamma lifetime: (F(t_now - tau) - F(t_prev - tau)) / (1 - F(t_prev - tau)).
    """
    if t_now < t_prev:
        raise ValueError("t_now must not precede t_prev")
    gap_prev = t_prev - tau_last
    if gap_prev < -1e-9 * max(abs(t_prev), abs(tau_last), 1.0):
        raise ValueError("t_prev must not precede the last association time")
    gap_prev = max(gap_prev, 0.0)
    f_prev = float(model.lifetime_cdf(gap_prev))
    f_now = float(model.lifetime_cdf(max(t_now - tau_last, gap_prev)))
    denom = 1.0 - f_prev
    if denom <= 0.0:
        return 1.0
    return float(min(max((f_now - f_prev) / denom, 0.0), 1.0))


def apply_deaths(
    particle: MultiTargetParticle,
    t_now: float,
    t_prev: float,
    model: BirthDeathModel,
    rng_seed,
) -> MultiTargetParticle:
    """Sample independent deaths for every visible target.

    Dead targets drop back to the (implicit) prior pool at the end of the
    slot list; survivors keep their order. Deterministic given rng_seed.
    """
    if not particle.tracks:
        return particle
    rng = np.random.default_rng(rng_seed)
    uniforms = rng.uniform(size=len(particle.tracks))
    survivors = tuple(
        track
        for track, u in zip(particle.tracks, uniforms)
        if u >= death_probability(t_now, t_prev, track.last_assoc_time, model)
    )
    if len(survivors) == len(particle.tracks):
        return particle
    return replace(particle, tracks=survivors)


def _predict_all(pset: MultiTargetParticleSet, motion: MotionModel):
    """Kalman-predict every visible target of every particle in one batch."""
    counts = [p.target_count for p in pset.particles]
    total = sum(counts)
    if total == 0:
        return pset
    means = np.empty((total, motion.dim))
    covs = np.empty((total, motion.dim, motion.dim))
    pos = 0
    for p in pset.particles:
        for track in p.tracks:
            means[pos] = track.est.mean
            covs[pos] = track.est.cov
            pos += 1
    pred_means, pred_covs = _batch_predict(means, covs, motion.A, motion.Q)
    particles = []
    pos = 0
    for p in pset.particles:
        tracks = []
        for track in p.tracks:
            est = GaussianEstimate._unchecked(pred_means[pos], pred_covs[pos])
            tracks.append(TargetTrack(est, track.last_assoc_time, track.target_id))
            pos += 1
        particles.append(MultiTargetParticle(p.history, tuple(tracks), p.weight))
    return MultiTargetParticleSet(tuple(particles), pset.order)


def _sample_deaths(
    pset: MultiTargetParticleSet,
    t_now: float,
    t_prev: float,
    model: BirthDeathModel,
    rng: np.random.Generator,
) -> MultiTargetParticleSet:
    if t_now == t_prev:
        return pset
    particles = []
    for p in pset.particles:
        if not p.tracks:
            particles.append(p)
            continue
        uniforms = rng.uniform(size=len(p.tracks))
        survivors = tuple(
            track
            for track, u in zip(p.tracks, uniforms)
            if u >= death_probability(t_now, t_prev, track.last_assoc_time, model)
        )
        particles.append(
            p
            if len(survivors) == len(p.tracks)
            else MultiTargetParticle(p.history, survivors, p.weight)
        )
    return MultiTargetParticleSet(tuple(particles), pset.order)


def rbmcda_predict(
    pset: MultiTargetParticleSet,
    motion: MotionModel,
    t_now: float,
    t_prev: float,
    model: BirthDeathModel,
    rng_seed,
) -> MultiTargetParticleSet:
    """Prediction and death sampling for a scan without measurements."""
    rng = np.random.default_rng(rng_seed)
    pset = _predict_all(pset, motion)
    return _sample_deaths(pset, t_now, t_prev, model, rng)


def rbmcda_step(
    pset: MultiTargetParticleSet,
    y,
    t_now: float,
    t_prev: float,
    motion: MotionModel,
    meas: MeasurementModel,
    clutter: ClutterModel,
    birth_model: BirthDeathModel,
    assoc_prior: AssociationPrior,
    birth_prior: GaussianEstimate,
    id_source: Iterator[int],
    rng_seed,
    resample_threshold: float = 0.5,
) -> MultiTargetParticleSet:
    """Process one measurement: predict, kill, associate, update, resample.

    Per particle: every visible target is Kalman-predicted, deaths are
    sampled over (t_prev, t_now], and the association posterior over
    {clutter, existing targets, newborn} is formed from 1/V, each target's
    predictive likelihood, and the birth prior's likelihood weighted by the
    joint birth/association prior. The sampled event is applied (birth
    activates a slot initialized from the birth prior and updates it with y;
    an existing association updates that target and refreshes its last
    association time; clutter changes no Gaussian), the weight picks up the
    posterior normalization constant, and the set is renormalized and
    systematically resampled below the ESS threshold.

    Newborn targets draw identifiers from id_source, which must never repeat
    within a run. Deterministic given rng_seed.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    rng = np.random.default_rng(rng_seed)

    pset = _predict_all(pset, motion)
    pset = _sample_deaths(pset, t_now, t_prev, birth_model, rng)

    birth_lik = kf_likelihood(birth_prior, y, meas)

    # Predictive likelihood of y under every visible target of every particle.
    counts = [p.target_count for p in pset.particles]
    total = sum(counts)
    if total:
        means = np.empty((total, motion.dim))
        covs = np.empty((total, motion.dim, motion.dim))
        pos = 0
        for p in pset.particles:
            for track in p.tracks:
                means[pos] = track.est.mean
                covs[pos] = track.est.cov
                pos += 1
        innovations, pht, s = _batch_innovation(means, covs, y, meas.H, meas.R)
        lik_flat = _batch_likelihood(s, innovations, y.size)
        upd_means, upd_covs = _batch_update(means, covs, innovations, pht, s)

    # Posterior for the newborn branch, shared by all particles.
    birth_est = None

    uniforms = rng.uniform(size=len(pset))
    particles = []
    new_weights = np.empty(len(pset))
    offset = 0
    # Particles often share (history, count); the joint prior is a pure
    # function of them, so memoize within the step.
    prior_memo: dict = {}
    for i, p in enumerate(pset.particles):
        t_count = p.target_count
        memo_key = (p.history, t_count)
        prior = prior_memo.get(memo_key)
        if prior is None:
            prior = birth_assoc_prior(p.history, t_count, birth_model, assoc_prior)
            prior_memo[memo_key] = prior
        events = list(prior.keys())
        lik = np.empty(len(events))
        for k, (born, c) in enumerate(events):
            if born:
                lik[k] = birth_lik
            elif c == 0:
                lik[k] = clutter.density
            else:
                lik[k] = lik_flat[offset + c - 1]
        probs = np.array([prior[e] for e in events])
        unnorm = lik * probs
        evidence = unnorm.sum()
        if evidence <= 0:
            raise ValueError("association posterior has zero mass for every event")
        posterior = unnorm / evidence
        choice = int(np.searchsorted(np.cumsum(posterior), uniforms[i], side="right"))
        choice = min(choice, len(events) - 1)
        born, c = events[choice]

        if born:
            if birth_est is None:
                birth_est = kf_update(birth_prior, y, meas)
            track = TargetTrack(birth_est, t_now, next(id_source))
            tracks = p.tracks + (track,)
        elif c == 0:
            tracks = p.tracks
        else:
            j = offset + c - 1
            est = GaussianEstimate._unchecked(upd_means[j], upd_covs[j])
            tracks = tuple(
                TargetTrack(est, t_now, t.target_id) if k == c - 1 else t
                for k, t in enumerate(p.tracks)
            )
        history = (p.history + (c,))[-pset.order :] if pset.order else ()
        particles.append(MultiTargetParticle(history, tracks, p.weight))
        new_weights[i] = p.weight * evidence
        offset += t_count

    weight_sum = new_weights.sum()
    if weight_sum <= 0 or not np.isfinite(weight_sum):
        raise ValueError("all particle weights underflowed to zero")
    new_weights /= weight_sum
    out = MultiTargetParticleSet(
        tuple(
            MultiTargetParticle(p.history, p.tracks, w)
            for p, w in zip(particles, new_weights)
        ),
        pset.order,
    )
    # Child seed keeps the resampling draw independent of the loop above.
    return resample(out, resample_threshold, rng.integers(0, 2**63 - 1))


def _map_particle(pset: MultiTargetParticleSet) -> MultiTargetParticle:
    return pset.particles[int(np.argmax(pset.weights))]


def estimated_count(pset: MultiTargetParticleSet, mode: str = "map") -> int:
    """Target-count estimate: highest-weight particle ('map') or the
    weight-weighted mode over particles ('mode')."""
    if mode == "map":
        return _map_particle(pset).target_count
    if mode == "mode":
        totals = {}
        for p in pset.particles:
            totals[p.target_count] = totals.get(p.target_count, 0.0) + p.weight
        best = max(sorted(totals), key=lambda c: totals[c])
        return int(best)
    raise ValueError(f"unknown count mode {mode!r}")


def extract_tracks(history: Sequence, count_mode: str = "map") -> tuple:
    """Turn a time-indexed sequence of (time, particle set) into id-keyed
    estimate streams plus a per-step count estimate.

    Streams follow the highest-weight particle of each step; an id appears
    whenever that particle carries it, so streams may have gaps but their
    times are strictly increasing. Returns (tracks, counts) where tracks maps
    target id -> list of (time, GaussianEstimate) and counts is a list of
    (time, int).
    """
    tracks: dict = {}
    counts = []
    for t, pset in history:
        counts.append((t, estimated_count(pset, count_mode)))
        best = _map_particle(pset)
        for track in best.tracks:
            tracks.setdefault(track.target_id, []).append((t, track.est))
    return tracks, counts
