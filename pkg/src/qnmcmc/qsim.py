"""Exact statevector simulation of depth-p QAOA on spin-glass cost Hamiltonians.

Only two layer types exist: the diagonal cost phase exp(-i gamma H_C) and the
transverse mixer exp(-i beta sum_j X_j). The initial state is |+>^n.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidArgumentError, NotFoundError, OptimizationError
from .spinglass import ENUMERATION_CAP, SpinGlassInstance, enumerate_energies


@dataclass(frozen=True, eq=False)
class Statevector:
    amplitudes: np.ndarray
    n: int

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.amplitudes) ** 2
        return p / p.sum()

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    @classmethod
    def uniform(cls, n: int) -> "Statevector":
        return cls(np.full(2**n, 2.0 ** (-n / 2), dtype=np.complex128), n)

    @classmethod
    def basis(cls, index: int, n: int) -> "Statevector":
        a = np.zeros(2**n, dtype=np.complex128)
        a[index] = 1.0
        return cls(a, n)


@dataclass(frozen=True)
class QaoaParams:
    gammas: tuple[float, ...]
    betas_mix: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "betas_mix", tuple(float(b) for b in self.betas_mix))
        if len(self.gammas) != len(self.betas_mix) or len(self.gammas) < 1:
            raise InvalidArgumentError("gammas and betas_mix must have equal length p >= 1")

    @property
    def p(self) -> int:
        return len(self.gammas)

    def to_vector(self) -> np.ndarray:
        return np.array(self.gammas + self.betas_mix)

    @classmethod
    def from_vector(cls, v) -> "QaoaParams":
        v = np.asarray(v, dtype=float)
        p = len(v) // 2
        return cls(tuple(v[:p]), tuple(v[p:]))

    def scaled(self, gamma_scale: float) -> "QaoaParams":
        return QaoaParams(tuple(g * gamma_scale for g in self.gammas), self.betas_mix)

    def to_dict(self) -> dict:
        return {"gammas": list(self.gammas), "betas": list(self.betas_mix)}


@dataclass(frozen=True, eq=False)
class CostDiagonal:
    energies: np.ndarray
    n: int


def build_cost_diagonal(instance: SpinGlassInstance, cap: int = ENUMERATION_CAP) -> CostDiagonal:
    return CostDiagonal(enumerate_energies(instance, cap), instance.n)


# ---------------------------------------------------------------------------
# circuit layers
# ---------------------------------------------------------------------------

_BLOCK = 5  # qubits per dense block; 5 passes over memory instead of 25 at n=25

_X = np.array([[0.0, 1.0], [1.0, 0.0]])


def _blocks(n: int):
    j = 0
    while j < n:
        w = min(_BLOCK, n - j)
        yield j, w
        j += w


def _apply_block(psi: np.ndarray, n: int, j: int, w: int, M: np.ndarray) -> np.ndarray:
    """Apply the 2**w x 2**w operator M to qubits j..j+w-1; returns a new array."""
    v = psi.reshape(2 ** (n - j - w), 2**w, 2**j)
    if j == 0:
        return (v.reshape(-1, 2**w) @ M.T).reshape(-1)
    return np.matmul(M, v).reshape(-1)


def _kron_power(u: np.ndarray, w: int) -> np.ndarray:
    M = u
    for _ in range(w - 1):
        M = np.kron(M, u)
    return M


def _x_sum_block(w: int) -> np.ndarray:
    return sum(np.kron(np.kron(np.eye(2 ** (w - 1 - q)), _X), np.eye(2**q)) for q in range(w))


def _apply_mixer(psi: np.ndarray, n: int, beta: float) -> np.ndarray:
    """In place: psi <- prod_j exp(-i beta X_j) psi."""
    u = np.array([[np.cos(beta), -1j * np.sin(beta)], [-1j * np.sin(beta), np.cos(beta)]])
    for j, w in _blocks(n):
        psi[:] = _apply_block(psi, n, j, w, _kron_power(u, w))
    return psi


def _apply_x_sum(psi: np.ndarray, n: int) -> np.ndarray:
    """(sum_j X_j) psi as a new array."""
    out = np.zeros_like(psi)
    for j, w in _blocks(n):
        out += _apply_block(psi, n, j, w, _x_sum_block(w))
    return out


def _check(diag: CostDiagonal, params: QaoaParams):
    if len(params.gammas) != len(params.betas_mix):
        raise InvalidArgumentError("parameter length mismatch")


def run_qaoa(diag: CostDiagonal, params: QaoaParams) -> Statevector:
    _check(diag, params)
    n = diag.n
    psi = np.full(2**n, 2.0 ** (-n / 2), dtype=np.complex128)
    for gamma, beta in zip(params.gammas, params.betas_mix):
        psi *= np.exp(-1j * gamma * diag.energies)
        _apply_mixer(psi, n, beta)
    return Statevector(psi, n)


def energy_expectation(state: Statevector, diag: CostDiagonal) -> float:
    if state.amplitudes.shape != diag.energies.shape:
        raise InvalidArgumentError("state and cost diagonal dimensions differ")
    return float(np.dot(np.abs(state.amplitudes) ** 2, diag.energies))


def energy_and_gradient(diag: CostDiagonal, params: QaoaParams) -> tuple[float, np.ndarray]:
    """<H_C> and its exact gradient w.r.t. (gammas, betas_mix) by adjoint sweep.

    Gradient layout matches :meth:`QaoaParams.to_vector`.
    """
    n, p = diag.n, params.p
    e = diag.energies
    phi = run_qaoa(diag, params).amplitudes
    lam = e * phi
    value = float(np.real(np.vdot(phi, lam)))
    g_gamma = np.zeros(p)
    g_beta = np.zeros(p)
    for layer in range(p - 1, -1, -1):
        gamma, beta = params.gammas[layer], params.betas_mix[layer]
        g_beta[layer] = 2.0 * np.imag(np.vdot(lam, _apply_x_sum(phi, n)))
        _apply_mixer(phi, n, -beta)
        _apply_mixer(lam, n, -beta)
        g_gamma[layer] = 2.0 * np.imag(np.vdot(lam, e * phi))
        undo = np.exp(1j * gamma * e)
        phi *= undo
        lam *= undo
    return value, np.concatenate((g_gamma, g_beta))


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

@dataclass
class OptimizerConfig:
    gtol: float = 1e-6
    maxiter: int = 500


def optimize_params(diag: CostDiagonal, init: QaoaParams, config: OptimizerConfig | None = None):
    """Minimise <H_C> with BFGS from ``init``.

    Returns ``(params, final_energy, trace)`` where trace rows are
    ``(iteration, energy, gradient_norm)``. The result is never worse than
    the starting point.
    """
    config = config or OptimizerConfig()
    trace: list[tuple[int, float, float]] = []
    cache: dict[bytes, tuple[float, np.ndarray]] = {}

    def fun(v):
        key = np.asarray(v, dtype=np.float64).tobytes()
        if key not in cache:
            val, grad = energy_and_gradient(diag, QaoaParams.from_vector(v))
            if not (np.isfinite(val) and np.all(np.isfinite(grad))):
                raise OptimizationError("non-finite objective during QAOA optimisation", trace)
            if len(cache) > 8:
                cache.pop(next(iter(cache)))
            cache[key] = (val, grad.copy())
        val, grad = cache[key]
        return val, grad.copy()

    x0 = init.to_vector()
    e0, g0 = fun(x0)
    trace.append((0, e0, float(np.max(np.abs(g0)))))
    if trace[0][2] < config.gtol:
        return init, e0, trace

    def callback(xk):
        val, grad = fun(xk)
        trace.append((len(trace), val, float(np.max(np.abs(grad)))))

    res = minimize(fun, x0, jac=True, method="BFGS", callback=callback,
                   options={"gtol": config.gtol, "maxiter": config.maxiter})
    if not np.isfinite(res.fun) or res.fun > e0:
        return init, e0, trace
    return QaoaParams.from_vector(res.x), float(res.fun), trace


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "energy", "gradient_norm"])
        for it, en, gn in trace:
            w.writerow([it, repr(float(en)), repr(float(gn))])


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_bitstrings(state: Statevector, count: int, seed) -> np.ndarray:
    """Draw ``count`` basis indices i.i.d. from |amplitude|**2.

    Inverse-CDF sampling on a fixed cumulative sum, so results depend only
    on ``seed``.
    """
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    cdf = np.cumsum(state.probabilities())
    cdf[-1] = 1.0
    u = np.random.default_rng(seed).random(count)
    return np.searchsorted(cdf, u, side="right").astype(np.int64)


# ---------------------------------------------------------------------------
# fixed angles
# ---------------------------------------------------------------------------

def load_angle_table(path=None) -> dict:
    if path is None:
        text = resources.files("qnmcmc.data").joinpath("fixed_angles.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def linear_ramp(p: int, gamma_max: float, beta_max: float) -> QaoaParams:
    ls = np.arange(1, p + 1) / p
    return QaoaParams(tuple(ls * gamma_max), tuple((1 - ls) * beta_max))


def fixed_angles(p: int, source=None, *, fallback: bool = False,
                 gamma_max: float = 0.7, beta_max: float = 0.6) -> QaoaParams:
    """Tabulated angles for depth ``p`` (verbatim), or a linear ramp if allowed.

    ``source`` is a table dict, a path to a JSON table, or None for the
    bundled Sherrington-Kirkpatrick table.
    """
    table = source if isinstance(source, dict) else load_angle_table(source)
    entry = table.get("angles", table).get(str(p))
    if entry is None:
        if fallback:
            return linear_ramp(p, gamma_max, beta_max)
        raise NotFoundError(
            f"no fixed angles for depth p={p}; pass fallback=True to use a linear ramp "
            f"(gamma_l = l/p * gamma_max, beta_l = (1 - l/p) * beta_max)")
    return QaoaParams(tuple(entry["gammas"]), tuple(entry["betas"]))


def to_instance_convention(params: QaoaParams, n: int) -> QaoaParams:
    """Map literature SK angles onto H_C = -sum J x x with unnormalised J.

    The tabulated angles assume the cost n**-0.5 * sum J Z Z, which equals
    -H_C / sqrt(n) here; the equivalent circuit uses gamma -> -gamma/sqrt(n).
    """
    return params.scaled(-1.0 / np.sqrt(n))
