"""Fully connected Ising spin glasses and their exact Boltzmann quantities.

Bit convention used everywhere in the package: bit ``j`` of a basis index is
spin/qubit ``j``, and bit value 0 means spin +1 (Z eigenvalue +1).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, ResourceLimitError

ENUMERATION_CAP = 20


# ---------------------------------------------------------------------------
# configuration encoding
# ---------------------------------------------------------------------------

def spins_from_index(index, n: int) -> np.ndarray:
    """Decode basis index (scalar or array) into +-1 spins, last axis = site."""
    idx = np.asarray(index, dtype=np.int64)
    bits = (idx[..., None] >> np.arange(n, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int8)


def index_from_spins(x) -> np.ndarray | int:
    x = np.asarray(x)
    if not np.all((x == 1) | (x == -1)):
        raise InvalidArgumentError("spins must be +1 or -1")
    bits = (x < 0).astype(np.int64)
    idx = bits @ (np.int64(1) << np.arange(x.shape[-1], dtype=np.int64))
    return int(idx) if np.ndim(idx) == 0 else idx


def bits_from_spins(x) -> np.ndarray:
    return (np.asarray(x) < 0).astype(np.int8)


def spins_from_bits(b) -> np.ndarray:
    return (1 - 2 * np.asarray(b, dtype=np.int8)).astype(np.int8)


def all_spins(n: int) -> np.ndarray:
    """All 2**n configurations as a (2**n, n) int8 array, row i = index i."""
    return spins_from_index(np.arange(2**n, dtype=np.int64), n)


@dataclass(frozen=True)
class SpinConfiguration:
    spins: np.ndarray
    index: int

    @classmethod
    def from_spins(cls, x) -> "SpinConfiguration":
        x = np.asarray(x, dtype=np.int8)
        return cls(x, index_from_spins(x))

    @classmethod
    def from_index(cls, index: int, n: int) -> "SpinConfiguration":
        if not 0 <= index < 2**n:
            raise InvalidArgumentError(f"index {index} out of range for n={n}")
        return cls(spins_from_index(index, n), int(index))


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpinGlassInstance:
    """Couplings J_jk (j < k) of a fully connected spin glass.

    ``couplings`` is the dense symmetric matrix with zero diagonal.
    """

    n: int
    couplings: np.ndarray
    seed: int | None = None
    _upper: tuple = field(init=False, repr=False)

    def __post_init__(self):
        J = np.array(self.couplings, dtype=np.float64)
        if J.shape != (self.n, self.n):
            raise InvalidArgumentError(f"couplings must be {self.n}x{self.n}")
        if not np.all(np.isfinite(J)):
            raise InvalidArgumentError("couplings must be finite")
        if not np.array_equal(J, J.T) or np.any(np.diag(J) != 0):
            raise InvalidArgumentError("couplings must be symmetric with zero diagonal")
        J.setflags(write=False)
        object.__setattr__(self, "couplings", J)
        object.__setattr__(self, "_upper", np.triu_indices(self.n, k=1))

    @classmethod
    def from_pairs(cls, n: int, pairs, seed=None) -> "SpinGlassInstance":
        pairs = list(pairs)
        if len({(j, k) for j, k, _ in pairs}) != n * (n - 1) // 2 or len(pairs) != n * (n - 1) // 2:
            raise InvalidArgumentError("instance must be fully connected")
        J = np.zeros((n, n))
        for j, k, v in pairs:
            if not 0 <= j < k < n:
                raise InvalidArgumentError(f"bad pair ({j}, {k})")
            J[j, k] = J[k, j] = float(v)
        return cls(n, J, seed)

    def pairs(self) -> list[tuple[int, int, float]]:
        j, k = self._upper
        return [(int(a), int(b), float(self.couplings[a, b])) for a, b in zip(j, k)]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "couplings": [[j, k, format(v, ".17g")] for j, k, v in self.pairs()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpinGlassInstance":
        return cls.from_pairs(int(d["n"]), [(int(j), int(k), float(v)) for j, k, v in d["couplings"]],
                              seed=d.get("seed"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "SpinGlassInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def generate_instance(n: int, seed: int) -> SpinGlassInstance:
    """Fully connected instance with i.i.d. standard-normal couplings.

    No 1/sqrt(n) scaling is applied. Couplings are drawn in row-major
    (j < k) order from ``numpy.random.default_rng(seed)``.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    rng = np.random.default_rng(seed)
    J = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    J[iu] = rng.standard_normal(len(iu[0]))
    J = J + J.T
    return SpinGlassInstance(n, J, seed)


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

def _check_spins(instance: SpinGlassInstance, x) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != instance.n:
        raise InvalidArgumentError(f"configuration length {x.shape[-1]} != n={instance.n}")
    return x


def energy(instance: SpinGlassInstance, x) -> float | np.ndarray:
    """E(x) = -sum_{j<k} J_jk x_j x_k. Accepts a single config or a batch."""
    x = _check_spins(instance, x).astype(np.float64)
    e = -0.5 * np.einsum("...j,jk,...k->...", x, instance.couplings, x)
    return float(e) if np.ndim(e) == 0 else e


def local_fields(instance: SpinGlassInstance, x) -> np.ndarray:
    x = _check_spins(instance, x).astype(np.float64)
    return x @ instance.couplings


def energy_delta(instance: SpinGlassInstance, x, flip_site: int) -> float:
    """E(x with ``flip_site`` flipped) - E(x), in O(n)."""
    x = _check_spins(instance, x)
    if not 0 <= flip_site < instance.n:
        raise InvalidArgumentError(f"site {flip_site} out of range for n={instance.n}")
    return float(2.0 * x[flip_site] * np.dot(instance.couplings[flip_site], x))


def enumerate_energies(instance: SpinGlassInstance, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Energies of all 2**n basis states, entry i for index i.

    Built by doubling over sites, O(2**n) memory traffic per site.
    """
    n = instance.n
    if n > cap:
        raise ResourceLimitError(f"n={n} exceeds enumeration cap {cap}")
    J = instance.couplings
    e = np.zeros(1)
    for j in range(n):
        # h[i] = sum_{k<j} J_kj x_k(i) over the 2**j states of the lower sites
        h = np.zeros(1)
        for k in range(j):
            h = np.concatenate((h + J[k, j], h - J[k, j]))
        e = np.concatenate((e - h, e + h))
    return e


# ---------------------------------------------------------------------------
# Boltzmann target
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoltzmannTarget:
    instance: SpinGlassInstance
    beta: float

    def __post_init__(self):
        if not self.beta >= 0:
            raise InvalidArgumentError("beta must be >= 0")

    @property
    def n(self) -> int:
        return self.instance.n

    def log_weight(self, x):
        """Unnormalised log density -beta E(x)."""
        return -self.beta * energy(self.instance, x)


def log_partition(target: BoltzmannTarget, cap: int = ENUMERATION_CAP) -> tuple[float, np.ndarray]:
    """(log Z, log pi) over all 2**n states."""
    e = enumerate_energies(target.instance, cap)
    a = -target.beta * (e - e.min())
    log_s = np.log(np.sum(np.exp(a)))
    log_z = log_s - target.beta * e.min()
    return float(log_z), a - log_s


def exact_partition(target: BoltzmannTarget, cap: int = ENUMERATION_CAP) -> tuple[float, np.ndarray]:
    """Partition function and normalised Boltzmann probabilities by enumeration.

    Factors are shifted by the minimum energy before exponentiation, so the
    probabilities stay finite at large beta. Z itself may overflow to inf
    for very low temperatures; use :func:`log_partition` there.
    """
    e = enumerate_energies(target.instance, cap)
    w = np.exp(-target.beta * (e - e.min()))
    s = w.sum()
    with np.errstate(over="ignore"):
        z = float(s * np.exp(-target.beta * e.min()))
    return z, w / s
