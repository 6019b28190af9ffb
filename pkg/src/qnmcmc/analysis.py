"""Exact and empirical chain diagnostics.

Dense transition matrices and their spectral gaps for enumerable sizes, plus
magnetization estimators, histograms and autocorrelation for sampled chains.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    InconsistencyError,
    InvalidArgumentError,
    ResourceLimitError,
    UndefinedAutocorrelationError,
)
from .mcmc import Chain, Proposal
from .spinglass import BoltzmannTarget, all_spins, log_partition

DENSE_CAP = 14
DEFAULT_BURN_IN = 10**4


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    n: int
    entries: np.ndarray

    def row_sums(self) -> np.ndarray:
        return self.entries.sum(axis=1)


@dataclass(frozen=True)
class SpectralReport:
    lambda2_modulus: float
    gap: float
    lambda1: float
    eigen_method: str


def build_transition_matrix(target: BoltzmannTarget, proposal: Proposal,
                            cap: int = DENSE_CAP) -> TransitionMatrix:
    """Dense MH kernel P[x, x'] with exact proposal and acceptance probabilities.

    Self-proposals (uniform, GNS) fall into the diagonal together with the
    rejected mass.
    """
    n = target.n
    if n > cap:
        raise ResourceLimitError(f"n={n} exceeds dense transition-matrix cap {cap}")
    if proposal.n != n:
        raise InvalidArgumentError("proposal dimension differs from target")
    _, log_pi = log_partition(target)
    lq = proposal.log_q_matrix()
    support = np.isfinite(lq)
    with np.errstate(invalid="ignore"):
        log_ratio = log_pi[None, :] - log_pi[:, None] + lq.T - lq
        log_p = np.where(support, lq + np.minimum(0.0, log_ratio), -np.inf)
    P = np.exp(log_p)
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, np.maximum(0.0, 1.0 - P.sum(axis=1)))
    return TransitionMatrix(n, P)


def detailed_balance_residual(P: TransitionMatrix, pi: np.ndarray) -> float:
    F = pi[:, None] * P.entries
    return float(np.max(np.abs(F - F.T)))


def stationarity_residual(P: TransitionMatrix, pi: np.ndarray) -> float:
    return float(np.sum(np.abs(pi @ P.entries - pi)))


def spectral_gap(P: TransitionMatrix, target: BoltzmannTarget) -> SpectralReport:
    """1 - |lambda_2| from the symmetrised kernel D^1/2 P D^-1/2, D = diag(pi).

    Computed in log space so the similarity transform cannot overflow at low
    temperature. Raises InconsistencyError if the kernel is not reversible
    with respect to the target or its top eigenvalue is not 1.
    """
    _, log_pi = log_partition(target)
    E = P.entries
    pos = E > 0
    with np.errstate(divide="ignore"):
        log_e = np.log(np.where(pos, E, 1.0))
    S = np.where(pos, np.exp(log_e + 0.5 * (log_pi[:, None] - log_pi[None, :])), 0.0)
    asym = float(np.max(np.abs(S - S.T)))
    if asym > 1e-8:
        raise InconsistencyError(f"kernel is not reversible w.r.t. the target (asymmetry {asym:.3g})")
    eig = np.linalg.eigvalsh(0.5 * (S + S.T))
    lam1 = float(eig[-1])
    if abs(lam1 - 1.0) > 1e-9:
        raise InconsistencyError(f"largest eigenvalue {lam1!r} != 1")
    lam2 = float(np.max(np.abs(eig[:-1]))) if eig.size > 1 else 0.0
    return SpectralReport(lam2, float(np.clip(1.0 - lam2, 0.0, 1.0)), lam1, "symmetric-dense")


def spectral_gap_nonsymmetric(P: TransitionMatrix) -> SpectralReport:
    """Same quantity from a general eigensolve of P itself (no reversibility used)."""
    eig = np.linalg.eigvals(P.entries)
    top = int(np.argmin(np.abs(eig - 1.0)))
    rest = np.delete(eig, top)
    lam2 = float(np.max(np.abs(rest))) if rest.size else 0.0
    return SpectralReport(lam2, float(np.clip(1.0 - lam2, 0.0, 1.0)), float(eig[top].real), "general-dense")


# ---------------------------------------------------------------------------
# magnetization
# ---------------------------------------------------------------------------

def magnetization(x):
    """Mean spin value m(x) = (1/n) sum_j x_j; batches along the leading axes."""
    m = np.mean(np.asarray(x, dtype=np.float64), axis=-1)
    return float(m) if np.ndim(m) == 0 else m


def chain_magnetization(chain: Chain) -> np.ndarray:
    n = chain.n
    pop = np.zeros(len(chain.states), dtype=np.int64)
    s = chain.states.copy()
    for _ in range(n):
        pop += s & 1
        s >>= 1
    return (n - 2 * pop) / n


@dataclass(eq=False)
class MagnetizationSeries:
    values: np.ndarray
    running_mean: np.ndarray
    mhat2: np.ndarray
    burn_in: int = 0


def magnetization_series(chain: Chain, burn_in: int = 0) -> MagnetizationSeries:
    """m(x^(t)) and the running estimator mhat2(M) = (mean of first M values)**2."""
    m = chain_magnetization(chain)[burn_in:]
    if m.size == 0:
        raise InvalidArgumentError("chain is empty after burn-in")
    run = np.cumsum(m) / np.arange(1, m.size + 1)
    return MagnetizationSeries(m, run, run**2, burn_in)


def aggregate_mhat2(series: list[MagnetizationSeries]) -> tuple[np.ndarray, np.ndarray]:
    """Per-step mean and standard deviation of mhat2 across chains."""
    stack = np.vstack([s.mhat2 for s in series])
    std = stack.std(axis=0, ddof=1) if len(series) > 1 else np.zeros(stack.shape[1])
    return stack.mean(axis=0), std


def pooled_magnetization(series: list[MagnetizationSeries]) -> dict:
    """Pooled estimate over chains: mean of chain averages, its standard error
    from the spread across chains, and the squared pooled estimator."""
    means = np.array([s.running_mean[-1] for s in series])
    pooled = float(means.mean())
    se = float(means.std(ddof=1) / np.sqrt(len(means))) if len(means) > 1 else float("nan")
    return {"pooled_mean": pooled, "standard_error": se, "mhat2": pooled**2,
            "chain_mhat2_mean": float(np.mean(means**2))}


def exact_magnetization(target: BoltzmannTarget) -> float:
    _, log_pi = log_partition(target)
    return float(np.exp(log_pi) @ magnetization(all_spins(target.n)))


def magnetization_values(n: int) -> np.ndarray:
    """The n + 1 attainable magnetizations, ascending."""
    return (2 * np.arange(n + 1) - n) / n


def magnetization_histogram(chain: Chain, burn_in: int = DEFAULT_BURN_IN) -> tuple[np.ndarray, np.ndarray]:
    """Counts per attainable magnetization value, post burn-in."""
    if len(chain.states) <= burn_in:
        raise InvalidArgumentError("chain is not longer than burn-in")
    n = chain.n
    m = chain_magnetization(chain)[burn_in:]
    k = np.rint((m * n + n) / 2).astype(np.int64)
    return magnetization_values(n), np.bincount(k, minlength=n + 1)


def exact_magnetization_distribution(target: BoltzmannTarget) -> np.ndarray:
    n = target.n
    _, log_pi = log_partition(target)
    k = np.rint((magnetization(all_spins(n)) * n + n) / 2).astype(np.int64)
    return np.bincount(k, weights=np.exp(log_pi), minlength=n + 1)


def autocorrelation(series, burn_in: int = DEFAULT_BURN_IN, max_lag: int = 1000) -> np.ndarray:
    """c(tau) = (<m(t+tau)m(t)> - <m>^2) / (<m^2> - <m>^2), tau = 0..max_lag.

    Averages run over the post-burn-in series; the lagged product average
    uses the L - tau available pairs.
    """
    x = np.asarray(series, dtype=np.float64)[burn_in:]
    L = x.size
    if L <= max_lag:
        raise InvalidArgumentError(f"series length after burn-in ({L}) must exceed max_lag ({max_lag})")
    mean = x.mean()
    var = np.mean(x * x) - mean**2
    if not var > 1e-300 or np.all(x == x[0]):
        raise UndefinedAutocorrelationError("series has zero variance")
    c = np.empty(max_lag + 1)
    c[0] = 1.0
    for tau in range(1, max_lag + 1):
        c[tau] = (np.dot(x[tau:], x[:L - tau]) / (L - tau) - mean**2) / var
    return c


def first_lag_below(c: np.ndarray, threshold: float = 0.1) -> int | None:
    idx = np.flatnonzero(c < threshold)
    return int(idx[0]) if idx.size else None


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
