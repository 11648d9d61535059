"""Small dense linear-Gaussian machinery.

State/measurement models, Kalman prediction/update/likelihood, and
discretization of continuous-time dynamics. Everything here is a pure
function of its inputs; estimates are immutable and safe to share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

__all__ = [
    "GaussianEstimate",
    "MotionModel",
    "MeasurementModel",
    "ContinuousMotionModel",
    "kf_predict",
    "kf_update",
    "kf_likelihood",
    "discretize_ct_model",
    "coordinated_turn_model",
]

# Relative tolerances for the covariance invariants.
_SYM_TOL = 1e-9
_PSD_TOL = 1e-9


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {a.shape}")
    return a


def _as_vector(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if a.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {a.shape}")
    return a


def symmetrize(p: np.ndarray) -> np.ndarray:
    """(P + P.T)/2, suppressing round-off drift."""
    return 0.5 * (p + p.T)


def _check_cov(p: np.ndarray, name: str = "cov") -> np.ndarray:
    """Validate symmetry and positive semidefiniteness up to tolerance."""
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} contains non-finite entries")
    scale = np.abs(p).max() if p.size else 0.0
    if np.abs(p - p.T).max() > _SYM_TOL * max(scale, 1.0):
        raise ValueError(f"{name} is not symmetric")
    p = symmetrize(p)
    if p.size:
        min_eig = float(np.linalg.eigvalsh(p).min())
        norm = float(np.linalg.norm(p, 2))
        if min_eig < -_PSD_TOL * max(norm, 1.0):
            raise ValueError(f"{name} is not positive semidefinite (min eig {min_eig:.3e})")
    return p


def chol_solve(p: np.ndarray, b: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Solve p @ x = b for symmetric positive definite p via Cholesky.

    Raises ValueError if p is not positive definite even after a tiny jitter;
    deterministic failure beats a silent pseudo-inverse.
    """
    p = symmetrize(p)
    try:
        c = np.linalg.cholesky(p)
    except np.linalg.LinAlgError:
        # Rescue round-off-level indefiniteness only; genuinely singular
        # matrices stay a hard error.
        min_eig = float(np.linalg.eigvalsh(p).min())
        if min_eig <= 0:
            raise ValueError(f"{name} is singular or not positive definite")
        jitter = 1e-12 * max(float(np.trace(p)) / max(p.shape[0], 1), 1e-300)
        try:
            c = np.linalg.cholesky(p + jitter * np.eye(p.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"{name} is singular or not positive definite") from exc
    y = np.linalg.solve(c, b)
    return np.linalg.solve(c.T, y)


def chol_inverse(p: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Symmetric positive definite inverse with symmetric re-projection."""
    return symmetrize(chol_solve(p, np.eye(p.shape[0]), name=name))


@dataclass(frozen=True)
class GaussianEstimate:
    """Mean vector and covariance matrix, the currency between trackers and fusers."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _as_vector(self.mean, "mean")
        cov = _as_matrix(self.cov, "cov")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean contains non-finite entries")
        cov = _check_cov(cov)
        mean = mean.copy()
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def _unchecked(cls, mean: np.ndarray, cov: np.ndarray) -> "GaussianEstimate":
        """Wrap trusted arrays without re-validating; hot-path internal use only."""
        obj = object.__new__(cls)
        mean = np.ascontiguousarray(mean, dtype=float)
        cov = np.ascontiguousarray(cov, dtype=float)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(obj, "mean", mean)
        object.__setattr__(obj, "cov", cov)
        return obj


@dataclass(frozen=True)
class MotionModel:
    """Discrete dynamics x_k = A x_{k-1} + w, w ~ N(0, Q)."""

    A: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.A, "A")
        q = _as_matrix(self.Q, "Q")
        if a.shape[0] != a.shape[1]:
            raise ValueError("A must be square")
        if q.shape != a.shape:
            raise ValueError(f"Q shape {q.shape} does not match A shape {a.shape}")
        q = _check_cov(q, "Q")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "Q", q)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @staticmethod
    def identity(n: int) -> "MotionModel":
        """No-op dynamics, used for repeated measurements at the same instant."""
        return MotionModel(np.eye(n), np.zeros((n, n)))


@dataclass(frozen=True)
class MeasurementModel:
    """Linear measurement y = H x + r, r ~ N(0, R) with R positive definite."""

    H: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        h = _as_matrix(self.H, "H")
        r = _as_matrix(self.R, "R")
        if r.shape != (h.shape[0], h.shape[0]):
            raise ValueError(f"R shape {r.shape} does not match H rows {h.shape[0]}")
        r = _check_cov(r, "R")
        if np.linalg.eigvalsh(r).min() <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "R", r)

    @property
    def state_dim(self) -> int:
        return self.H.shape[1]

    @property
    def meas_dim(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class ContinuousMotionModel:
    """Continuous dynamics dx/dt = F x + L w with diffusion spectral density Qc."""

    F: np.ndarray
    L: np.ndarray
    Qc: np.ndarray

    def __post_init__(self):
        f = _as_matrix(self.F, "F")
        l = _as_matrix(self.L, "L")
        qc = _as_matrix(self.Qc, "Qc")
        if f.shape[0] != f.shape[1]:
            raise ValueError("F must be square")
        if l.shape[0] != f.shape[0]:
            raise ValueError("L rows must match F dimension")
        if qc.shape != (l.shape[1], l.shape[1]):
            raise ValueError("Qc shape must match L columns")
        qc = _check_cov(qc, "Qc")
        object.__setattr__(self, "F", f)
        object.__setattr__(self, "L", l)
        object.__setattr__(self, "Qc", qc)

    @property
    def dim(self) -> int:
        return self.F.shape[0]


def kf_predict(est: GaussianEstimate, model: MotionModel) -> GaussianEstimate:
    """Kalman prediction: mean -> A m, cov -> A P A' + Q."""
    if model.dim != est.dim:
        raise ValueError(f"model dimension {model.dim} does not match estimate {est.dim}")
    mean = model.A @ est.mean
    cov = symmetrize(model.A @ est.cov @ model.A.T + model.Q)
    return GaussianEstimate(mean, cov)


def kf_update(prior: GaussianEstimate, y, model: MeasurementModel) -> GaussianEstimate:
    """Kalman update of a predicted estimate with measurement y.

    Innovation V = y - H m, S = H P H' + R, gain K = P H' S^-1;
    posterior mean = m + K V, cov = P - K S K', re-symmetrized.
    """
    y = _as_vector(y, "y")
    if model.state_dim != prior.dim or y.size != model.meas_dim:
        raise ValueError("measurement model dimensions do not match")
    if not np.all(np.isfinite(y)):
        raise ValueError("measurement contains non-finite entries")
    innovation = y - model.H @ prior.mean
    ph_t = prior.cov @ model.H.T
    s = symmetrize(model.H @ ph_t + model.R)
    # K = P H' S^-1, computed as solve(S, (P H')')' to avoid forming S^-1
    gain = chol_solve(s, ph_t.T, name="innovation covariance").T
    mean = prior.mean + gain @ innovation
    cov = symmetrize(prior.cov - gain @ s @ gain.T)
    return GaussianEstimate(mean, cov)


def kf_likelihood(prior: GaussianEstimate, y, model: MeasurementModel) -> float:
    """Predictive density of measurement y: N(y; H m, H P H' + R)."""
    y = _as_vector(y, "y")
    if model.state_dim != prior.dim or y.size != model.meas_dim:
        raise ValueError("measurement model dimensions do not match")
    innovation = y - model.H @ prior.mean
    s = symmetrize(model.H @ prior.cov @ model.H.T + model.R)
    try:
        c = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance is singular") from exc
    z = np.linalg.solve(c, innovation)
    log_det = 2.0 * np.sum(np.log(np.diag(c)))
    log_pdf = -0.5 * (y.size * math.log(2.0 * math.pi) + log_det + z @ z)
    return float(np.exp(log_pdf))


def discretize_ct_model(ct: ContinuousMotionModel, dt: float) -> MotionModel:
    """Discretize continuous dynamics over a step of length dt.

    A = exp(F dt); Q is the integral of exp(F s) L Qc L' exp(F' s) over [0, dt],
    computed with the matrix-fraction (augmented-exponential) method.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = ct.dim
    g = ct.L @ ct.Qc @ ct.L.T
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = ct.F
    block[:n, n:] = g
    block[n:, n:] = -ct.F.T
    phi = expm(block * dt)
    a = phi[:n, :n]
    # Q = C D^-1 with [C; D] = Phi [0; I]; D^-1 = exp(F' dt) = A'
    q = symmetrize(phi[:n, n:] @ a.T)
    return MotionModel(a, q)


# Batched single-model Kalman math over stacks of Gaussians, shared by the
# particle trackers. Inputs are trusted arrays; outputs are symmetrized.


def _batch_predict(means, covs, a, q):
    pred_means = means @ a.T
    pred_covs = np.einsum("ij,njk,lk->nil", a, covs, a) + q
    return pred_means, 0.5 * (pred_covs + np.transpose(pred_covs, (0, 2, 1)))


def _batch_innovation(means, covs, y, h, r):
    innovations = y - means @ h.T
    pht = covs @ h.T
    s = h @ pht + r
    return innovations, pht, 0.5 * (s + np.transpose(s, (0, 2, 1)))


def _batch_likelihood(s, innovations, ny):
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular innovation covariance") from exc
    solved = np.linalg.solve(chol, innovations[:, :, None])[:, :, 0]
    maha = np.sum(solved * solved, axis=1)
    log_det = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
    return np.exp(-0.5 * (ny * np.log(2.0 * np.pi) + log_det + maha))


def _batch_update(means, covs, innovations, pht, s):
    gains = np.linalg.solve(
        np.transpose(s, (0, 2, 1)), np.transpose(pht, (0, 2, 1))
    ).transpose(0, 2, 1)
    upd_means = means + np.einsum("nij,nj->ni", gains, innovations)
    upd_covs = covs - gains @ s @ np.transpose(gains, (0, 2, 1))
    return upd_means, 0.5 * (upd_covs + np.transpose(upd_covs, (0, 2, 1)))


def coordinated_turn_model(turn_rate: float, diffusion: float) -> ContinuousMotionModel:
    """Planar state [x, y, vx, vy] whose velocity rotates at turn_rate,
    driven by white acceleration noise with spectral density diffusion * I."""
    f = np.array(
        [
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, turn_rate],
            [0.0, 0.0, -turn_rate, 0.0],
        ]
    )
    l = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return ContinuousMotionModel(f, l, diffusion * np.eye(2))
