"""Metropolis-Hastings sampling of Boltzmann targets with pluggable proposals.

Three proposals are provided: single-spin flip (local, symmetric), uniform
over all configurations (global, symmetric) and a trained MADE used as an
independence sampler, Q(x'|x) = p(x').
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .made import MadeModel
from .seeding import CHAIN, derive_seed
from .spinglass import (
    BoltzmannTarget,
    bits_from_spins,
    energy,
    index_from_spins,
    spins_from_bits,
    spins_from_index,
)

MAX_CHAIN_SPINS = 62


class Proposal:
    kind: str
    independent: bool = False

    def __init__(self, n: int):
        self.n = n

    def propose(self, x, rng):
        """Return ``(x_new, log Q(x_new | x))``."""
        raise NotImplementedError

    def log_q(self, x_new, x_old) -> float:
        raise NotImplementedError

    def log_q_matrix(self) -> np.ndarray:
        """Dense log Q(x'|x), row = current state x, -inf off the support."""
        raise NotImplementedError


class SingleSpinFlip(Proposal):
    kind = "ssf"

    def propose(self, x, rng):
        return propose_ssf(x, rng)

    def log_q(self, x_new, x_old) -> float:
        d = np.count_nonzero(np.asarray(x_new) != np.asarray(x_old))
        return -math.log(self.n) if d == 1 else -math.inf

    def log_q_matrix(self) -> np.ndarray:
        N = 2**self.n
        L = np.full((N, N), -np.inf)
        rows = np.arange(N)
        for j in range(self.n):
            L[rows, rows ^ (1 << j)] = -math.log(self.n)
        return L


class UniformProposal(Proposal):
    kind = "uniform"
    independent = True

    def propose(self, x, rng):
        return propose_uniform(self.n, rng)

    def log_q(self, x_new, x_old=None) -> float:
        return -self.n * math.log(2.0)

    def log_q_matrix(self) -> np.ndarray:
        return np.full((2**self.n, 2**self.n), -self.n * math.log(2.0))

    def draw(self, count: int, rng) -> tuple[np.ndarray, np.ndarray]:
        idx = rng.integers(0, 2**self.n, size=count, dtype=np.int64)
        return idx, np.full(count, -self.n * math.log(2.0))


class GNSProposal(Proposal):
    """Independence proposal from a trained MADE over bits (spin +1 = bit 0)."""

    kind = "gns"
    independent = True

    def __init__(self, model: MadeModel, n: int | None = None):
        if n is not None and model.dim != n:
            raise InvalidArgumentError(f"model dimension {model.dim} != n={n}")
        super().__init__(model.dim)
        self.model = model

    def propose(self, x, rng):
        return propose_gns(self.model, rng)

    def log_q(self, x_new, x_old=None) -> float:
        return self.model.log_prob(bits_from_spins(x_new))

    def log_q_matrix(self) -> np.ndarray:
        lp = self.model.enumerate_log_probs()
        return np.broadcast_to(lp, (lp.size, lp.size)).copy()

    def draw(self, count: int, rng) -> tuple[np.ndarray, np.ndarray]:
        bits, lp = self.model.sample(count, rng)
        weights = np.int64(1) << np.arange(self.n, dtype=np.int64)
        return bits.astype(np.int64) @ weights, lp


def make_proposal(kind: str, n: int, model: MadeModel | None = None) -> Proposal:
    if kind == "ssf":
        return SingleSpinFlip(n)
    if kind == "uniform":
        return UniformProposal(n)
    if kind == "gns":
        if model is None:
            raise InvalidArgumentError("gns proposal needs a trained model")
        return GNSProposal(model, n)
    raise InvalidArgumentError(f"unknown proposal kind {kind!r}")


# ---------------------------------------------------------------------------
# single draws
# ---------------------------------------------------------------------------

def propose_ssf(x, rng):
    x = np.asarray(x, dtype=np.int8)
    n = x.shape[-1]
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    x_new = x.copy()
    j = int(rng.integers(n))
    x_new[j] = -x_new[j]
    return x_new, -math.log(n)


def propose_uniform(n: int, rng):
    if not 1 <= n <= 63:
        raise InvalidArgumentError("uniform proposal supports 1 <= n <= 63")
    bits = rng.integers(0, 2, size=n, dtype=np.int8)
    return spins_from_bits(bits), -n * math.log(2.0)


def propose_gns(model: MadeModel, rng):
    bits, lp = model.sample(1, rng)
    return spins_from_bits(bits[0]), float(lp[0])


def acceptance_log_ratio(target: BoltzmannTarget, x, x_new, proposal: Proposal) -> float:
    """log of pi(x')Q(x|x') / (pi(x)Q(x'|x)); the MH acceptance is min(1, exp(.))."""
    x = np.asarray(x)
    x_new = np.asarray(x_new)
    if np.array_equal(x, x_new):
        return 0.0
    inst = target.instance
    log_pi = -target.beta * (energy(inst, x_new) - energy(inst, x))
    if proposal.kind in ("ssf", "uniform"):
        return float(log_pi)
    return float(log_pi + proposal.log_q(x, x_new) - proposal.log_q(x_new, x))


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Chain:
    """MH trajectory. ``states`` and ``energies`` have length steps + 1
    (initial state first); ``accept_flags[t]`` refers to the move t -> t+1."""

    states: np.ndarray
    energies: np.ndarray
    accept_flags: np.ndarray
    seed: int
    target: BoltzmannTarget
    proposal_kind: str

    @property
    def n(self) -> int:
        return self.target.n

    @property
    def steps(self) -> int:
        return len(self.accept_flags)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accept_flags))

    def spins(self) -> np.ndarray:
        return spins_from_index(self.states, self.n)

    def summary(self) -> dict:
        return {
            "proposal": self.proposal_kind,
            "seed": self.seed,
            "n": self.n,
            "beta": self.target.beta,
            "instance_seed": self.target.instance.seed,
            "steps": self.steps,
            "acceptance_rate": self.acceptance_rate,
        }

    def write_trace_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "state_index", "energy", "accepted"])
            flags = np.concatenate(([1], self.accept_flags.astype(int)))
            for t, (s, e, a) in enumerate(zip(self.states.tolist(), self.energies.tolist(), flags.tolist())):
                w.writerow([t, s, repr(e), a])

    def write_trace_npy(self, path) -> None:
        rec = np.zeros(len(self.states), dtype=[("state_index", "<i8"), ("energy", "<f8"), ("accepted", "?")])
        rec["state_index"] = self.states
        rec["energy"] = self.energies
        rec["accepted"][0] = True
        rec["accepted"][1:] = self.accept_flags
        np.save(path, rec)

    def write_summary(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=1) + "\n")


def run_chain(target: BoltzmannTarget, proposal: Proposal, steps: int, x0=None, seed=None) -> Chain:
    """Run ``steps`` Metropolis-Hastings moves.

    A move is accepted when log(u) <= log acceptance ratio, u ~ U(0, 1). If
    ``x0`` is None the start is uniform random from the chain's own stream.
    Independence proposals are drawn in one batch up front; SSF keeps local
    fields and updates energies incrementally.
    """
    if steps < 1:
        raise InvalidArgumentError("steps must be >= 1")
    n = target.n
    if n > MAX_CHAIN_SPINS:
        raise InvalidArgumentError(f"chains store packed indices; n <= {MAX_CHAIN_SPINS}")
    if proposal.n != n:
        raise InvalidArgumentError(f"proposal dimension {proposal.n} != n={n}")
    rng = np.random.default_rng(seed)
    if x0 is None:
        x0 = spins_from_bits(rng.integers(0, 2, size=n, dtype=np.int8))
    x0 = np.asarray(x0, dtype=np.int8)
    if x0.shape != (n,):
        raise InvalidArgumentError("initial configuration has wrong length")
    inst, beta = target.instance, target.beta

    if proposal.independent:
        prop_idx, prop_lq = proposal.draw(steps, rng)
        log_u = np.log(rng.random(steps)).tolist()
        prop_e = energy(inst, spins_from_index(prop_idx, n))
        w_new = (-beta * prop_e - prop_lq).tolist()
        prop_e = prop_e.tolist()
        prop_idx = prop_idx.tolist()
        cur_idx = index_from_spins(x0)
        cur_e = energy(inst, x0)
        w_cur = -beta * cur_e - proposal.log_q(x0)
        states = [cur_idx]
        energies = [cur_e]
        flags = [False] * steps
        for t in range(steps):
            if log_u[t] <= w_new[t] - w_cur:
                flags[t] = True
                cur_idx, cur_e, w_cur = prop_idx[t], prop_e[t], w_new[t]
            states.append(cur_idx)
            energies.append(cur_e)
    else:
        sites = rng.integers(0, n, size=steps).tolist()
        log_u = np.log(rng.random(steps)).tolist()
        J = inst.couplings
        x = x0.astype(np.float64)
        h = J @ x
        xs = x.tolist()
        cur_idx = index_from_spins(x0)
        cur_e = energy(inst, x0)
        states = [cur_idx]
        energies = [cur_e]
        flags = [False] * steps
        for t in range(steps):
            j = sites[t]
            d_e = 2.0 * xs[j] * h[j]
            if log_u[t] <= -beta * d_e:
                flags[t] = True
                h -= (2.0 * xs[j]) * J[j]
                xs[j] = -xs[j]
                cur_idx ^= 1 << j
                cur_e += d_e
            states.append(cur_idx)
            energies.append(cur_e)
    return Chain(np.array(states, dtype=np.int64), np.array(energies), np.array(flags, dtype=bool),
                 seed, target, proposal.kind)


def run_chains(target: BoltzmannTarget, proposal: Proposal, steps: int, chains: int,
               master_seed: int) -> list[Chain]:
    """Independent chains seeded from ``(master_seed, chain_index)``."""
    return [run_chain(target, proposal, steps, seed=derive_seed(master_seed, CHAIN, c))
            for c in range(chains)]
