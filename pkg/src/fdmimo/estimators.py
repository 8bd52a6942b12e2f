"""Greedy sparse recovery over the whitened measurement model ``Y = Phi A G + N``.

All estimators work with the effective regressor ``B = Phi @ atoms`` (one
column per dictionary atom) and share the residual-power stopping rule
``||R||_F^2 / (ML K) <= noise_var``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .dictionary import Dictionary
from .errors import DomainError, RankError

ESTIMATORS = ("OMP", "SWOMP", "BSOMP")

# Candidates whose regressor column is this close (relative) to the span of
# the current support add nothing and would make the LS system singular.
_SPAN_TOL = 1e-9


@dataclass(frozen=True)
class RunRecord:
    """One greedy pass.

    ``gains`` are the final nonzero rows on ``support`` (after the MMSE step
    for the Bayesian estimator); ``converged`` is False when the pass stopped
    on the support-size cap instead of the residual threshold.
    """

    support: tuple
    gains: np.ndarray
    residual_power: float
    iterations: int
    converged: bool
    residual_history: tuple = ()
    columns: tuple | None = None
    prior_var: float | None = None


@dataclass(frozen=True, eq=False)
class EstimateResult:
    gain_matrix: np.ndarray
    channel: np.ndarray
    runs: list = field(default_factory=list)


def _atoms(dictionary) -> np.ndarray:
    return dictionary.atoms if isinstance(dictionary, Dictionary) else np.asarray(dictionary)


def _qr(B_sub, support=None):
    q, r = linalg.qr(B_sub, mode="economic")
    d = np.abs(np.diag(r))
    if d.size and d.min() <= 1e-12 * max(d.max(), np.finfo(float).tiny):
        raise RankError(f"regressor for support {support} is rank deficient", support=support)
    return q, r


def _ls(B_sub, Y, support=None):
    q, r = _qr(B_sub, support)
    coef = linalg.solve_triangular(r, q.conj().T @ Y)
    return coef, q


def ls_gains(atoms_sub, sensing, Y) -> np.ndarray:
    """Least-squares gains minimizing ``||Y - Phi atoms_sub Q||_F``."""
    B = np.asarray(sensing) @ np.atleast_2d(np.asarray(atoms_sub))
    coef, _ = _ls(B, np.asarray(Y), support=tuple(range(B.shape[1])))
    return coef


def mmse_refine(atoms_sub, sensing, Y, noise_var: float, prior_cov) -> np.ndarray:
    """Posterior mean of the support gains under a ``CN(0, prior_cov)`` prior.

    ``prior_cov`` may be a scalar, a vector of variances or a diagonal matrix.
    """
    if noise_var <= 0:
        raise DomainError("noise variance must be positive")
    B = np.asarray(sensing) @ np.atleast_2d(np.asarray(atoms_sub))
    return _mmse(B, np.asarray(Y), noise_var, prior_cov)


def _mmse(B, Y, noise_var, prior_cov):
    s = B.shape[1]
    prior = np.asarray(prior_cov, dtype=float)
    if prior.ndim == 2:
        prior = np.diag(prior)
    prior = np.broadcast_to(prior, (s,))
    if np.any(prior <= 0):
        raise DomainError("prior variances must be positive")
    precision = B.conj().T @ B / noise_var + np.diag(1.0 / prior)
    rhs = B.conj().T @ Y / noise_var
    return linalg.cho_solve(linalg.cho_factor(precision, lower=True), rhs)


def _log_scores(B, col_energy, Y, noise_var, prior_var):
    b = col_energy / noise_var + 1.0 / prior_var
    corr = np.sum(np.abs(B.conj().T @ Y) ** 2, axis=1)
    return corr / (noise_var ** 2 * b) - Y.shape[1] * np.log(b)


def single_index_log_scores(Y, sensing, dictionary, noise_var: float, prior_var: float,
                            excluded=()) -> np.ndarray:
    """Log posterior weight of every one-atom support, up to a shared constant.

    Excluded indices score ``-inf``.
    """
    if noise_var <= 0 or prior_var <= 0:
        raise DomainError("noise and prior variances must be positive")
    B = np.asarray(sensing) @ _atoms(dictionary)
    Y = np.atleast_2d(np.asarray(Y))
    if Y.shape[0] != B.shape[0]:
        Y = Y.T if Y.shape[1] == B.shape[0] else Y
    scores = _log_scores(B, np.sum(np.abs(B) ** 2, axis=0), Y, noise_var, prior_var)
    excluded = list(excluded)
    if excluded:
        scores[excluded] = -np.inf
    return scores


def normalized_probabilities(log_scores) -> np.ndarray:
    log_scores = np.asarray(log_scores, dtype=float)
    return np.exp(log_scores - logsumexp(log_scores))


def sample_index(log_scores, rng: np.random.Generator) -> int:
    """Draw ``i`` with probability ``exp(score_i - logsumexp(scores))``."""
    log_scores = np.asarray(log_scores, dtype=float)
    if not np.any(np.isfinite(log_scores)):
        raise DomainError("no candidate index has finite score")
    cdf = np.cumsum(normalized_probabilities(log_scores))
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    i = min(i, log_scores.size - 1)
    # guard against rounding landing on a zero-probability tail entry
    while not np.isfinite(log_scores[i]):
        i -= 1
    return i


def _degenerate_mask(B, col_energy, q):
    """Columns lying (numerically) inside the span of the orthonormal basis ``q``."""
    left = col_energy - np.sum(np.abs(q.conj().T @ B) ** 2, axis=0)
    return left <= _SPAN_TOL * col_energy


def _resolve_cap(max_support, ml, G):
    cap = min(ml, G) if max_support is None else int(max_support)
    if not 1 <= cap <= min(ml, G):
        raise DomainError(f"max_support must lie in [1, {min(ml, G)}], got {cap}")
    return cap


def _greedy(B, Y, noise_var, cap, select):
    """Shared pursuit loop; ``select(R, excluded_mask)`` returns the next index."""
    ml, K = Y.shape
    col_energy = np.sum(np.abs(B) ** 2, axis=0)
    excluded = col_energy <= 0
    support = []
    R = Y
    coef = np.zeros((0, K), dtype=complex)
    history = []
    threshold = noise_var * ml * K
    while True:
        i = select(R, excluded)
        support.append(i)
        coef, q = _ls(B[:, support], Y, tuple(support))
        R = Y - B[:, support] @ coef
        power = float(np.sum(np.abs(R) ** 2))
        history.append(power)
        converged = power <= threshold
        if converged or len(support) >= cap:
            break
        excluded = _degenerate_mask(B, col_energy, q)
        excluded[support] = True
        if excluded.all():
            break
    power = float(np.sum(np.abs(R) ** 2))
    return tuple(support), coef, power / (ml * K), converged, tuple(history)


def _inverse_norms(B):
    # correlations are taken against unit-norm effective columns Phi a_i
    norms = np.linalg.norm(B, axis=0)
    return np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)


def _scatter(G, K, support, rows):
    out = np.zeros((G, K), dtype=complex)
    if support:
        out[list(support)] = rows
    return out


def _prepare(Y, sensing, dictionary):
    atoms = _atoms(dictionary)
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim == 1:
        Y = Y[:, None]
    B = np.asarray(sensing) @ atoms
    if Y.shape[0] != B.shape[0]:
        raise DomainError(f"observations have {Y.shape[0]} rows, sensing has {B.shape[0]}")
    return atoms, Y, B


def omp(Y, sensing, dictionary, noise_var: float, max_support: int | None = None,
        mode: str = "per_subcarrier") -> EstimateResult:
    """Orthogonal matching pursuit.

    Atoms are ranked by their correlation with the residual, normalized by
    the column norm of ``Phi a_i``.  ``mode="per_subcarrier"`` runs classic OMP independently on each column of
    ``Y`` with the threshold ``||r_k||^2 / ML <= noise_var``.  ``mode="joint"``
    selects a common support by the l2 norm of the correlations across
    subcarriers.  Ties go to the lowest index.
    """
    atoms, Y, B = _prepare(Y, sensing, dictionary)
    G, K = atoms.shape[1], Y.shape[1]
    cap = _resolve_cap(max_support, B.shape[0], G)

    scale = _inverse_norms(B)

    def select(R, excluded):
        c = np.sum(np.abs(B.conj().T @ R) ** 2, axis=1) * scale**2
        c[excluded] = -1.0
        return int(np.argmax(c))

    if mode == "joint":
        columns = [tuple(range(K))]
    elif mode == "per_subcarrier":
        columns = [(k,) for k in range(K)]
    else:
        raise DomainError(f"unknown OMP mode {mode!r}")

    Ghat = np.zeros((G, K), dtype=complex)
    runs = []
    for cols in columns:
        sub = Y[:, list(cols)]
        support, coef, power, converged, history = _greedy(B, sub, noise_var, cap, select)
        if support:
            Ghat[np.ix_(list(support), list(cols))] = coef
        runs.append(RunRecord(support, coef, power, len(support), converged, history, cols))
    return EstimateResult(Ghat, atoms @ Ghat, runs)


def swomp(Y, sensing, dictionary, noise_var: float,
          max_support: int | None = None) -> EstimateResult:
    """Simultaneous OMP over the whitened model; one support shared by all subcarriers.

    Each step picks the atom maximizing the sum over subcarriers of the
    correlation magnitudes ``|b_i^H r_k| / ||b_i||``.
    """
    atoms, Y, B = _prepare(Y, sensing, dictionary)
    G, K = atoms.shape[1], Y.shape[1]
    cap = _resolve_cap(max_support, B.shape[0], G)
    scale = _inverse_norms(B)

    def select(R, excluded):
        c = np.sum(np.abs(B.conj().T @ R), axis=1) * scale
        c[excluded] = -1.0
        return int(np.argmax(c))

    support, coef, power, converged, history = _greedy(B, Y, noise_var, cap, select)
    Ghat = _scatter(G, K, support, coef)
    run = RunRecord(support, coef, power, len(support), converged, history)
    return EstimateResult(Ghat, atoms @ Ghat, [run])


def initial_prior_var(Y) -> float:
    """Per-entry energy of the observations, the prior variance for the first draws."""
    Y = np.asarray(Y)
    return float(np.sum(np.abs(Y) ** 2) / Y.size)


def bsomp(Y, sensing, dictionary, noise_var: float, V: int = 20,
          rng: np.random.Generator | None = None, max_support: int | None = None,
          prior_var: float | None = None, score_on: str = "residual") -> EstimateResult:
    """Bayesian inference-aided simultaneous pursuit.

    Runs ``V`` randomized greedy passes.  Each draw samples a new atom with
    probability proportional to its single-atom posterior weight, evaluated on
    the running residual (``score_on="residual"``) or on ``Y`` throughout
    (``score_on="observations"``).  Each pass ends with an MMSE refinement of
    its support gains under ``Gamma = (||Q||_F^2 / (|I| K)) I``; the returned
    gain matrix is the plain average of the ``V`` scattered estimates.

    ``prior_var`` sets the prior variance used while drawing; it defaults to
    :func:`initial_prior_var` of ``Y``.
    """
    if V < 1:
        raise DomainError("ensemble size V must be at least 1")
    if noise_var <= 0:
        raise DomainError("noise variance must be positive (use a small floor for noiseless data)")
    if score_on not in ("residual", "observations"):
        raise DomainError(f"unknown scoring target {score_on!r}")
    if rng is None:
        rng = np.random.default_rng()
    atoms, Y, B = _prepare(Y, sensing, dictionary)
    G, K = atoms.shape[1], Y.shape[1]
    cap = _resolve_cap(max_support, B.shape[0], G)
    col_energy = np.sum(np.abs(B) ** 2, axis=0)
    gamma0 = initial_prior_var(Y) if prior_var is None else float(prior_var)
    gamma0 = max(gamma0, np.finfo(float).tiny)

    Ghat = np.zeros((G, K), dtype=complex)
    runs = []
    for pass_rng in rng.spawn(V):
        def select(R, excluded, _rng=pass_rng):
            target = R if score_on == "residual" else Y
            scores = _log_scores(B, col_energy, target, noise_var, gamma0)
            scores[excluded] = -np.inf
            return sample_index(scores, _rng)

        support, coef, power, converged, history = _greedy(B, Y, noise_var, cap, select)
        gamma = float(np.sum(np.abs(coef) ** 2)) / (len(support) * K)
        if gamma > 0:
            coef = _mmse(B[:, list(support)], Y, noise_var, gamma)
        Ghat += _scatter(G, K, support, coef)
        runs.append(RunRecord(support, coef, power, len(support), converged, history,
                              prior_var=gamma))
    Ghat /= V
    return EstimateResult(Ghat, atoms @ Ghat, runs)


def estimate(kind: str, Y, sensing, dictionary, noise_var: float,
             rng: np.random.Generator | None = None, **options) -> EstimateResult:
    """Dispatch to an estimator by name (``OMP``, ``SWOMP`` or ``BSOMP``)."""
    kind = kind.upper()
    if kind == "OMP":
        return omp(Y, sensing, dictionary, noise_var, options.get("max_support"),
                   options.get("omp_mode", "per_subcarrier"))
    if kind == "SWOMP":
        return swomp(Y, sensing, dictionary, noise_var, options.get("max_support"))
    if kind == "BSOMP":
        return bsomp(Y, sensing, dictionary, noise_var, options.get("V", 20), rng,
                     options.get("max_support"), options.get("prior_var"),
                     options.get("score_on", "residual"))
    raise DomainError(f"unknown estimator {kind!r}; expected one of {ESTIMATORS}")
