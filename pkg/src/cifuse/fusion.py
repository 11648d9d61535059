"""Track-to-track fusion with unknown cross-correlation.

Covariance intersection (CI) and its batch form combine estimates through a
convex combination of precisions. The modified variants additionally scale
each input precision by a factor built from the source node's detection
probability and covariance-growth parameter, which keeps the fusion
consistent while favoring the more reliable node. Mixing weights are chosen
to minimize the trace (optionally the determinant) of the fused covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gaussian import GaussianEstimate, chol_inverse

__all__ = [
    "NodeProfile",
    "MixingWeights",
    "ci_fuse",
    "bci_fuse",
    "modified_precisions",
    "modified_ci_fuse",
    "mbci_fuse",
    "detection_scale_factors",
    "optimize_omega_pair",
    "optimize_omega_simplex",
    "expected_payoff",
]

_TIE_TOL = 1e-12


@dataclass(frozen=True)
class NodeProfile:
    """Detection characteristics of one monitoring node.

    chi in (0, 1]; its inverse (>= 1) is the per-interval covariance growth
    a fuser assumes for this node's miss-detection stretches.
    """

    p_detect: float
    chi: float = 1.0
    clutter_density: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_detect <= 1.0:
            raise ValueError("p_detect must lie in [0, 1]")
        if not 0.0 < self.chi <= 1.0:
            raise ValueError("chi must lie in (0, 1]")
        if self.clutter_density < 0:
            raise ValueError("clutter_density must be nonnegative")


@dataclass(frozen=True)
class MixingWeights:
    """Convex weights over fusion inputs: each in [0, 1], summing to 1."""

    omega: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float).reshape(-1)
        if w.size < 1 or np.any(w < -1e-12) or np.any(w > 1 + 1e-12):
            raise ValueError("weights must lie in [0, 1]")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        w = np.clip(w, 0.0, 1.0)
        w.setflags(write=False)
        object.__setattr__(self, "omega", w)

    def __len__(self) -> int:
        return self.omega.size

    def __getitem__(self, i: int) -> float:
        return float(self.omega[i])

    @classmethod
    def pair(cls, omega: float) -> "MixingWeights":
        return cls(np.array([omega, 1.0 - omega]))


def _omega_scalar(w) -> float:
    if isinstance(w, MixingWeights):
        if len(w) != 2:
            raise ValueError("pairwise fusion needs exactly two weights")
        return w[0]
    return float(w)


def _coerce_weights(w, n: int) -> np.ndarray:
    if not isinstance(w, MixingWeights):
        w = MixingWeights(np.asarray(w, dtype=float))
    if len(w) != n:
        raise ValueError(f"expected {n} weights, got {len(w)}")
    return w.omega


def _fuse_with_precisions(
    means: Sequence[np.ndarray], precisions: Sequence[np.ndarray], weights: np.ndarray
) -> GaussianEstimate:
    fused_prec = np.zeros_like(precisions[0])
    info = np.zeros_like(means[0])
    for w, m, prec in zip(weights, means, precisions):
        fused_prec = fused_prec + w * prec
        info = info + w * (prec @ m)
    cov = chol_inverse(fused_prec, name="fused precision")
    return GaussianEstimate(cov @ info, cov)


def ci_fuse(a: GaussianEstimate, b: GaussianEstimate, w) -> GaussianEstimate:
    """Covariance intersection of two estimates at mixing weight w.

    w may be a scalar omega (weight on a) or a two-element MixingWeights.
    """
    omega = _omega_scalar(w)
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [0, 1]")
    prec_a = chol_inverse(a.cov, name="covariance of input a")
    prec_b = chol_inverse(b.cov, name="covariance of input b")
    return _fuse_with_precisions(
        [a.mean, b.mean], [prec_a, prec_b], np.array([omega, 1.0 - omega])
    )


def bci_fuse(inputs: Sequence[GaussianEstimate], w) -> GaussianEstimate:
    """Batch covariance intersection of N >= 2 estimates."""
    if len(inputs) < 2:
        raise ValueError("batch fusion needs at least two inputs")
    weights = _coerce_weights(w, len(inputs))
    precisions = [chol_inverse(e.cov, name="input covariance") for e in inputs]
    return _fuse_with_precisions([e.mean for e in inputs], precisions, weights)


def detection_scale_factors(profiles: Sequence[NodeProfile]) -> np.ndarray:
    """Per-node precision scale factors from detection probability and growth.

    factor_i = p_i + (1 - p_i) chi_i * prod_{j != i} (p_j + (1 - p_j) chi_j);
    each lies in (0, 1], and 1 exactly when every chi is 1.
    """
    base = np.array([prof.p_detect + (1.0 - prof.p_detect) * prof.chi for prof in profiles])
    factors = np.empty(len(profiles))
    for i, prof in enumerate(profiles):
        others = np.prod(np.delete(base, i))
        factors[i] = prof.p_detect + (1.0 - prof.p_detect) * prof.chi * others
    return factors


def modified_precisions(
    pa: np.ndarray, pb: np.ndarray, prof_a: NodeProfile, prof_b: NodeProfile
) -> tuple:
    """Detection-aware precisions for pairwise modified CI.

    Scales each inverse covariance by its node's factor; factors are <= 1,
    so the implied covariances only ever grow.
    """
    factor_a, factor_b = detection_scale_factors([prof_a, prof_b])
    prec_a = chol_inverse(np.asarray(pa, dtype=float), name="covariance of input a")
    prec_b = chol_inverse(np.asarray(pb, dtype=float), name="covariance of input b")
    return factor_a * prec_a, factor_b * prec_b


def modified_ci_fuse(
    a: GaussianEstimate,
    b: GaussianEstimate,
    prof_a: NodeProfile,
    prof_b: NodeProfile,
    objective: str = "trace",
) -> GaussianEstimate:
    """Pairwise CI on detection-scaled precisions with optimized weight."""
    prec_a, prec_b = modified_precisions(a.cov, b.cov, prof_a, prof_b)
    omega = optimize_omega_pair(prec_a, prec_b, objective=objective)
    return _fuse_with_precisions(
        [a.mean, b.mean], [prec_a, prec_b], np.array([omega, 1.0 - omega])
    )


def mbci_fuse(inputs: Sequence, objective: str = "trace") -> GaussianEstimate:
    """Batch modified CI over (estimate, profile) pairs with optimized weights."""
    if len(inputs) < 2:
        raise ValueError("batch fusion needs at least two inputs")
    if len(inputs) == 2:
        (ea, pa), (eb, pb) = inputs
        return modified_ci_fuse(ea, eb, pa, pb, objective=objective)
    estimates = [e for e, _ in inputs]
    profiles = [p for _, p in inputs]
    factors = detection_scale_factors(profiles)
    precisions = [
        f * chol_inverse(e.cov, name="input covariance")
        for f, e in zip(factors, estimates)
    ]
    weights = optimize_omega_simplex(precisions, objective=objective)
    return _fuse_with_precisions([e.mean for e in estimates], precisions, weights.omega)


def _objective_value(prec: np.ndarray, objective: str) -> float:
    if objective == "trace":
        return float(np.trace(np.linalg.inv(prec)))
    if objective == "det":
        sign, logdet = np.linalg.slogdet(prec)
        if sign <= 0:
            return math.inf
        return -logdet
    raise ValueError(f"unknown objective {objective!r}")


def _golden_section(f, lo: float, hi: float, tol: float = 1e-9) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    invphi2 = 1.0 - invphi
    a, b = lo, hi
    h = b - a
    c = a + invphi2 * h
    d = a + invphi * h
    fc, fd = f(c), f(d)
    while h > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            h = b - a
            c = a + invphi2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + invphi * h
            fd = f(d)
    return 0.5 * (a + b)


def optimize_omega_pair(
    prec_a: np.ndarray, prec_b: np.ndarray, objective: str = "trace"
) -> float:
    """Weight minimizing the fused-covariance objective for two precisions.

    Coarse 64-interval grid over [0, 1] followed by golden-section refinement
    on the bracketing interval; exact ties are broken toward 0.5.
    """
    prec_a = np.asarray(prec_a, dtype=float)
    prec_b = np.asarray(prec_b, dtype=float)

    def f(w: float) -> float:
        return _objective_value(w * prec_a + (1.0 - w) * prec_b, objective)

    grid = np.linspace(0.0, 1.0, 65)
    values = np.array([f(w) for w in grid])
    k = int(np.argmin(values))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    best = _golden_section(f, lo, hi)
    f_best = f(best)
    # Endpoint optima: the golden bracket cannot step outside the grid.
    for w_edge in (0.0, 1.0):
        if f(w_edge) <= f_best:
            best, f_best = w_edge, f(w_edge)
    if f(0.5) <= f_best + _TIE_TOL * (1.0 + abs(f_best)):
        return 0.5
    return float(best)


def _softmax_weights(z: np.ndarray) -> np.ndarray:
    # Gauge-fixed parameterization: full logits are (0, z_1, ..., z_{N-1}).
    exp = math.exp
    shift = 0.0
    for v in z:
        if v > shift:
            shift = float(v)
    w = np.array([exp(-shift)] + [exp(float(v) - shift) for v in z])
    w /= w.sum()
    return w


def _nelder_mead(f, x0: np.ndarray, max_fev: int, fatol: float = 1e-11):
    """Deterministic Nelder-Mead with standard coefficients; returns (x, fx).

    Terminates on the simplex's objective spread alone; flat-region stalls
    are the caller's problem (optimize_omega_simplex restarts on a fresh
    simplex to cover them).
    """
    n = x0.size
    if n == 0:
        return x0, f(x0)
    simplex = [np.asarray(x0, dtype=float)]
    for i in range(n):
        v = simplex[0].copy()
        v[i] += 0.5
        simplex.append(v)
    fvals = [f(v) for v in simplex]
    fev = len(simplex)
    while fev < max_fev:
        order = np.argsort(fvals, kind="stable")
        simplex = [simplex[i] for i in order]
        fvals = [fvals[i] for i in order]
        if (fvals[-1] - fvals[0]) < fatol * (1.0 + abs(fvals[0])):
            break
        centroid = simplex[0].copy()
        for v in simplex[1:-1]:
            centroid += v
        centroid /= n
        worst = simplex[-1]
        reflected = centroid + (centroid - worst)
        f_r = f(reflected)
        fev += 1
        if f_r < fvals[0]:
            expanded = centroid + 2.0 * (centroid - worst)
            f_e = f(expanded)
            fev += 1
            if f_e < f_r:
                simplex[-1], fvals[-1] = expanded, f_e
            else:
                simplex[-1], fvals[-1] = reflected, f_r
        elif f_r < fvals[-2]:
            simplex[-1], fvals[-1] = reflected, f_r
        else:
            contracted = centroid + 0.5 * (worst - centroid)
            f_c = f(contracted)
            fev += 1
            if f_c < fvals[-1]:
                simplex[-1], fvals[-1] = contracted, f_c
            else:
                best = simplex[0]
                for i in range(1, len(simplex)):
                    simplex[i] = best + 0.5 * (simplex[i] - best)
                    fvals[i] = f(simplex[i])
                fev += n
    order = np.argsort(fvals, kind="stable")
    return simplex[order[0]], fvals[order[0]]


def optimize_omega_simplex(
    precisions: Sequence[np.ndarray], objective: str = "trace"
) -> MixingWeights:
    """Weights minimizing the fused-covariance objective over the simplex.

    Direct search: Nelder-Mead on a softmax parameterization, restarted from
    the centroid and from each vertex; the exact vertices are evaluated as
    candidates as well, so boundary optima are hit exactly. Equal inputs tie
    toward the centroid.
    """
    n = len(precisions)
    if n < 2:
        raise ValueError("need at least two precisions")
    stack = np.stack([np.asarray(p, dtype=float) for p in precisions])
    dim = stack.shape[1]
    flat = stack.reshape(n, dim * dim)
    inv = np.linalg.inv
    use_trace = objective == "trace"

    def fw(w: np.ndarray) -> float:
        m = (w @ flat).reshape(dim, dim)
        if use_trace:
            return float(inv(m).trace())
        return _objective_value(m, objective)

    def fz(z: np.ndarray) -> float:
        return fw(_softmax_weights(z))

    centroid = np.full(n, 1.0 / n)
    best_w = centroid
    best_f = fw(centroid)
    # Exact vertex candidates.
    for i in range(n):
        vertex = np.zeros(n)
        vertex[i] = 1.0
        f_v = fw(vertex)
        if f_v < best_f - _TIE_TOL:
            best_w, best_f = vertex, f_v
    # Multi-start direct search in gauge-fixed logit space. Vertex starts use
    # moderate logits: deep softmax saturation is flat and stalls the search.
    starts = [np.zeros(n - 1)]
    for i in range(n):
        z = np.full(n - 1, 0.0)
        if i == 0:
            z -= 4.0
        else:
            z[i - 1] = 4.0
        starts.append(z)
    # The objective is convex over the simplex, so the centroid start does
    # the real work; the vertex starts are cheap insurance.
    for j, z0 in enumerate(starts):
        budget = 300 if j == 0 else 24
        z_opt, f_opt = _nelder_mead(fz, z0, max_fev=budget)
        if f_opt < best_f - _TIE_TOL:
            best_w, best_f = _softmax_weights(z_opt), f_opt
    # Restart polish: a fresh simplex at the clipped incumbent recovers from
    # softmax saturation, where the degenerated simplex stalls short of
    # boundary optima with one small nonzero weight.
    for _ in range(3):
        w_clip = np.clip(best_w, 1e-3, None)
        w_clip = w_clip / w_clip.sum()
        z0 = np.log(w_clip[1:] / w_clip[0])
        z_opt, f_opt = _nelder_mead(fz, z0, max_fev=150)
        if f_opt < best_f - max(_TIE_TOL, 1e-9 * abs(best_f)):
            best_w, best_f = _softmax_weights(z_opt), f_opt
        else:
            break
    f_centroid = fw(centroid)
    if f_centroid <= best_f + _TIE_TOL * (1.0 + abs(best_f)):
        return MixingWeights(centroid)
    return MixingWeights(best_w)


def expected_payoff(
    pa: np.ndarray,
    pb: np.ndarray,
    prof_a: NodeProfile,
    prof_b: NodeProfile,
    omega: float,
) -> float:
    """Expected two-node game payoff at mixing weight omega.

    Literal sum over the four detect/miss outcome cells, each a trace of the
    correspondingly chi-scaled precision combination, weighted by the joint
    detection probabilities. Matches the trace of the modified fused
    precision built from detection_scale_factors.
    """
    p, q = prof_a.p_detect, prof_b.p_detect
    chi_a, chi_b = prof_a.chi, prof_b.chi
    prec_a = chol_inverse(np.asarray(pa, dtype=float), name="covariance of input a")
    prec_b = chol_inverse(np.asarray(pb, dtype=float), name="covariance of input b")
    w, v = omega, 1.0 - omega
    cells = [
        (p * q, np.trace(w * prec_a + v * prec_b)),
        (p * (1.0 - q), np.trace(w * prec_a + v * chi_b * prec_b)),
        ((1.0 - p) * q, np.trace(w * chi_a * prec_a + v * prec_b)),
        ((1.0 - p) * (1.0 - q), chi_a * chi_b * np.trace(w * prec_a + v * prec_b)),
    ]
    return float(sum(prob * value for prob, value in cells))
