"""Full-covariance Gaussian mixture fitted by EM with k-means++ initialisation.

The number of components always equals the data dimension N (one prototypical
cluster per label).  Every covariance carries a ridge ``reg * I``; on
log-probability inputs the points sit on a curved (N-1)-dimensional surface
and the raw scatter is close to singular without it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import InsufficientData, InvalidConfig, InvalidShape, SingularCovariance

LOG_2PI = np.log(2.0 * np.pi)
MAX_LLOYD_ITER = 50
EMPTY_RESPONSIBILITY = 1e-12

# Independent random streams derived from a single user seed.
STREAM_FIT = 0
STREAM_SAMPLE = 1
STREAM_SYNTH = 2
STREAM_BAYES = 3


def make_rng(seed: int, stream: int = STREAM_FIT) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream)``."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise InvalidConfig(f"seed must be in [0, 2**64), got {seed}")
    return np.random.Generator(np.random.Philox(key=seed + (stream << 64)))


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 100
    tol: float = 1e-3
    reg: float = 1e-6
    min_responsibility_floor: float = 1e-300

    def __post_init__(self):
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidConfig(f"max_iter must be a positive integer, got {self.max_iter}")
        if not self.tol > 0:
            raise InvalidConfig(f"tol must be positive, got {self.tol}")
        if not self.reg >= 0:
            raise InvalidConfig(f"reg must be non-negative, got {self.reg}")
        if not self.min_responsibility_floor >= 0:
            raise InvalidConfig("min_responsibility_floor must be non-negative")


@dataclass(frozen=True)
class GaussianComponent:
    mean: np.ndarray
    covariance: np.ndarray
    weight: float = 1.0


@dataclass(frozen=True, eq=False)
class MixtureEstimate:
    """Mixture parameters stacked as arrays plus fit metadata.

    ``means`` is ``(K, D)``, ``covariances`` is ``(K, D, D)`` and ``weights``
    is ``(K,)``.  ``log_likelihood`` is the mean per-sample log-likelihood of
    the final parameters.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    seed: int | None = None
    log_likelihood: float = float("nan")
    trajectory: tuple[float, ...] = ()
    converged: bool = False
    iterations: int = 0
    degenerate: bool = False
    _chol: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_components(cls, components: Sequence[GaussianComponent], **meta) -> "MixtureEstimate":
        means = np.array([c.mean for c in components], dtype=np.float64)
        covs = np.array([c.covariance for c in components], dtype=np.float64)
        weights = np.array([c.weight for c in components], dtype=np.float64)
        return cls(weights=weights / weights.sum(), means=means, covariances=covs, **meta)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[GaussianComponent]:
        return [
            GaussianComponent(self.means[k], self.covariances[k], float(self.weights[k]))
            for k in range(self.n_components)
        ]

    def cholesky(self) -> np.ndarray:
        """Lower Cholesky factors of all covariances, cached."""
        if self._chol is None:
            object.__setattr__(self, "_chol", _cholesky_stack(self.covariances))
        return self._chol

    def with_weights(self, weights) -> "MixtureEstimate":
        w = np.asarray(weights, dtype=np.float64)
        return MixtureEstimate(
            weights=w / w.sum(),
            means=self.means,
            covariances=self.covariances,
            seed=self.seed,
            log_likelihood=self.log_likelihood,
            trajectory=self.trajectory,
            converged=self.converged,
            iterations=self.iterations,
            degenerate=self.degenerate,
        )


class EStep(NamedTuple):
    responsibilities: np.ndarray
    log_likelihood: float
    degenerate: bool


def _cholesky_stack(covs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("covariance is not positive definite after regularisation") from exc


def _as_data(data, n_components: int | None = None) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidShape(f"data must be a 2-D array, got shape {X.shape}")
    if n_components is not None and X.shape[0] < n_components:
        raise InsufficientData(f"need at least {n_components} points, got {X.shape[0]}")
    return X


def component_log_densities(X: np.ndarray, means: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """``(n, K)`` matrix of Gaussian log-densities given Cholesky factors."""
    n, d = X.shape
    out = np.empty((n, means.shape[0]))
    for k in range(means.shape[0]):
        L = chol[k]
        z = solve_triangular(L, (X - means[k]).T, lower=True, check_finite=False)
        half_logdet = np.log(np.diag(L)).sum()
        out[:, k] = -0.5 * d * LOG_2PI - half_logdet - 0.5 * np.einsum("ij,ij->j", z, z)
    return out


def gaussian_log_density(x, component: GaussianComponent):
    """log N(x | mean, covariance) evaluated through a Cholesky factor.

    ``x`` may be a single point ``(D,)`` (returns a float) or ``(n, D)``.
    """
    mean = np.atleast_1d(np.asarray(component.mean, dtype=np.float64))
    cov = np.atleast_2d(np.asarray(component.covariance, dtype=np.float64))
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim <= 1
    X = np.atleast_2d(X.reshape(-1) if single else X)
    if X.shape[1] != mean.shape[0] or cov.shape != (mean.shape[0], mean.shape[0]):
        raise InvalidShape("point, mean and covariance dimensions disagree")
    chol = _cholesky_stack(cov[None])
    out = component_log_densities(X, mean[None], chol)[:, 0]
    return float(out[0]) if single else out


def _kmeans_pp_centers(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d2 = ((X - X[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[idx].copy()


def _assign(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def _reseed_empty(X: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> bool:
    """Move each empty centroid onto the point farthest from its own centroid."""
    k = centers.shape[0]
    changed = False
    for j in range(k):
        if np.any(labels == j):
            continue
        dist = ((X - centers[labels]) ** 2).sum(axis=1)
        far = int(dist.argmax())
        centers[j] = X[far]
        labels[far] = j
        changed = True
    return changed


def _lloyd(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    k = centers.shape[0]
    labels = _assign(X, centers)
    for _ in range(MAX_LLOYD_ITER):
        _reseed_empty(X, centers, labels)
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = X[members].mean(axis=0)
        new = _assign(X, centers)
        if np.array_equal(new, labels):
            break
        labels = new
    # A re-seed on the final pass can leave a centroid without members.
    for _ in range(k):
        if not _reseed_empty(X, centers, labels):
            break
    return labels


def kmeans_init(data, n_components: int, seed: int, reg: float = 1e-6) -> MixtureEstimate:
    """Initial mixture from k-means++ seeding followed by Lloyd iterations."""
    X = _as_data(data, n_components)
    if n_components < 1:
        raise InvalidConfig("n_components must be positive")
    rng = make_rng(seed)
    centers = _kmeans_pp_centers(X, n_components, rng)
    labels = _lloyd(X, centers)
    n, d = X.shape
    weights = np.empty(n_components)
    means = np.empty((n_components, d))
    covs = np.empty((n_components, d, d))
    eye = np.eye(d)
    for j in range(n_components):
        members = X[labels == j]
        weights[j] = len(members) / n
        means[j] = members.mean(axis=0)
        diff = members - means[j]
        covs[j] = diff.T @ diff / len(members) + reg * eye
    return MixtureEstimate(weights=weights, means=means, covariances=covs, seed=int(seed))


def e_step(data, estimate: MixtureEstimate) -> EStep:
    """Posterior responsibilities and the mean per-sample log-likelihood.

    Rows whose joint densities all underflow become uniform and set the
    ``degenerate`` flag.
    """
    X = _as_data(data)
    log_dens = component_log_densities(X, estimate.means, estimate.cholesky())
    with np.errstate(divide="ignore"):
        log_joint = log_dens + np.log(estimate.weights)
    log_norm = logsumexp(log_joint, axis=1)
    bad = ~np.isfinite(log_norm)
    resp = np.exp(log_joint - np.where(bad, 0.0, log_norm)[:, None])
    degenerate = bool(bad.any())
    if degenerate:
        resp[bad] = 1.0 / estimate.n_components
        log_norm = np.where(bad, np.log(np.finfo(float).tiny), log_norm)
    return EStep(resp, float(log_norm.mean()), degenerate)


def _covariance_objective(cov: np.ndarray, scatter: np.ndarray) -> float:
    """log|cov| + tr(cov^-1 scatter); lower is better for the EM update."""
    L = np.linalg.cholesky(cov)
    inv_l = solve_triangular(L, np.eye(len(cov)), lower=True, check_finite=False)
    return 2.0 * np.log(np.diag(L)).sum() + float(np.einsum("ij,ij->", inv_l @ scatter, inv_l))


def m_step(data, responsibilities, reg: float = 1e-6, previous: MixtureEstimate | None = None) -> MixtureEstimate:
    """Weighted maximum-likelihood update of weights, means and covariances.

    Covariances are the weighted scatter plus ``reg * I``.  Because of the
    ridge this is not the exact maximiser of the EM auxiliary function, so
    when ``previous`` is given a component keeps its previous covariance if
    that scores better on the auxiliary function; this keeps the likelihood
    non-decreasing.

    A component whose total responsibility drops below 1e-12 is restarted at
    the point it explains worst (lowest maximum responsibility) with the
    global data covariance; the result is flagged ``degenerate``.
    """
    X = _as_data(data)
    R = np.asarray(responsibilities, dtype=np.float64)
    n, d = X.shape
    k = R.shape[1]
    if R.shape[0] != n:
        raise InvalidShape("responsibilities and data disagree on the number of points")
    nk = R.sum(axis=0)
    eye = np.eye(d)
    means = np.empty((k, d))
    covs = np.empty((k, d, d))
    weights = nk / n
    degenerate = False
    for j in range(k):
        if nk[j] < EMPTY_RESPONSIBILITY:
            degenerate = True
            worst = int(R.max(axis=1).argmin())
            means[j] = X[worst]
            covs[j] = np.atleast_2d(np.cov(X, rowvar=False, bias=True)) + reg * eye
            weights[j] = 1.0 / n
            continue
        means[j] = R[:, j] @ X / nk[j]
        diff = X - means[j]
        scatter = (R[:, j, None] * diff).T @ diff / nk[j]
        scatter = 0.5 * (scatter + scatter.T)
        covs[j] = scatter + reg * eye
        if previous is not None and reg > 0:
            try:
                if _covariance_objective(previous.covariances[j], scatter) < _covariance_objective(
                    covs[j], scatter
                ):
                    covs[j] = previous.covariances[j]
            except np.linalg.LinAlgError:
                pass
    return MixtureEstimate(
        weights=weights / weights.sum(), means=means, covariances=covs, degenerate=degenerate
    )


def _collapsed(means: np.ndarray, covs: np.ndarray, rtol: float = 1e-9) -> bool:
    """True when two components ended up with the same mean and covariance."""
    scale = max(1.0, float(np.abs(means).max()))
    for i in range(len(means)):
        for j in range(i + 1, len(means)):
            if np.allclose(means[i], means[j], rtol=0, atol=rtol * scale) and np.allclose(
                covs[i], covs[j], rtol=0, atol=1e-6 * float(np.abs(covs[i]).max())
            ):
                return True
    return False


def fit_em(data, n_components: int, seed: int, config: EmConfig = EmConfig()) -> MixtureEstimate:
    """Run EM from a k-means start until the mean log-likelihood settles.

    The trajectory holds the mean log-likelihood of the initial parameters
    followed by one entry per EM iteration; convergence means the last two
    entries differ by less than ``config.tol``.
    """
    X = _as_data(data, n_components)
    est = kmeans_init(X, n_components, seed, config.reg)
    step = e_step(X, est)
    trajectory = [step.log_likelihood]
    degenerate = step.degenerate
    converged = False
    iterations = 0
    while iterations < config.max_iter:
        R = np.maximum(step.responsibilities, config.min_responsibility_floor)
        R /= R.sum(axis=1, keepdims=True)
        est = m_step(X, R, config.reg, previous=est)
        step = e_step(X, est)
        iterations += 1
        degenerate |= est.degenerate or step.degenerate
        trajectory.append(step.log_likelihood)
        if abs(trajectory[-1] - trajectory[-2]) < config.tol:
            converged = True
            break
    degenerate |= _collapsed(est.means, est.covariances)
    return MixtureEstimate(
        weights=est.weights,
        means=est.means,
        covariances=est.covariances,
        seed=int(seed),
        log_likelihood=trajectory[-1],
        trajectory=tuple(trajectory),
        converged=converged,
        iterations=iterations,
        degenerate=degenerate,
        _chol=est.cholesky(),
    )
