import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qnmcmc.errors import InvalidArgumentError, ResourceLimitError
from qnmcmc.spinglass import (
    BoltzmannTarget,
    SpinGlassInstance,
    all_spins,
    energy,
    energy_delta,
    enumerate_energies,
    exact_partition,
    generate_instance,
    index_from_spins,
    log_partition,
    spins_from_index,
)


def brute_energy(J, x):
    n = len(x)
    e = 0.0
    for j in range(n):
        for k in range(j + 1, n):
            e -= J[j][k] * x[j] * x[k]
    return e


def pair_instance(j12=1.0):
    return SpinGlassInstance.from_pairs(2, [(0, 1, j12)])


def test_single_spin_has_no_couplings():
    inst = generate_instance(1, 3)
    assert inst.pairs() == []
    assert np.all(inst.couplings == 0)


def test_generation_is_deterministic():
    a, b = generate_instance(12, 99), generate_instance(12, 99)
    assert np.array_equal(a.couplings, b.couplings)
    assert not np.array_equal(a.couplings, generate_instance(12, 100).couplings)


def test_zero_spins_rejected():
    with pytest.raises(InvalidArgumentError):
        generate_instance(0, 0)


def test_coupling_moments_match_standard_normal():
    vals = np.concatenate([[c for _, _, c in generate_instance(4, s).pairs()] for s in range(10_000)])
    N = vals.size
    assert abs(vals.mean()) < 5 / math.sqrt(N)
    # var of the sample variance of a standard normal is 2/N
    assert abs(vals.var() - 1.0) < 5 * math.sqrt(2 / N)


def test_couplings_symmetric_and_readonly():
    inst = generate_instance(5, 1)
    assert np.array_equal(inst.couplings, inst.couplings.T)
    assert np.all(np.diag(inst.couplings) == 0)
    with pytest.raises(ValueError):
        inst.couplings[0, 1] = 3.0


def test_from_pairs_requires_full_connectivity():
    with pytest.raises(InvalidArgumentError):
        SpinGlassInstance.from_pairs(3, [(0, 1, 1.0), (0, 2, 1.0)])


def test_two_spin_energies():
    inst = pair_instance()
    assert energy(inst, [1, 1]) == -1.0
    assert energy(inst, [1, -1]) == 1.0
    assert energy_delta(inst, np.array([1, 1]), 0) == 2.0


def test_energy_matches_double_loop():
    inst = generate_instance(6, 21)
    J = inst.couplings.tolist()
    for x in itertools.product((1, -1), repeat=6):
        assert energy(inst, x) == pytest.approx(brute_energy(J, x), abs=1e-12)


def test_energy_length_mismatch():
    with pytest.raises(InvalidArgumentError):
        energy(generate_instance(3, 0), [1, 1])
    with pytest.raises(InvalidArgumentError):
        energy_delta(generate_instance(3, 0), np.ones(3), 3)


def test_energy_delta_matches_full_energy():
    inst = generate_instance(8, 5)
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.choice([-1, 1], size=8)
        for j in range(8):
            y = x.copy()
            y[j] = -y[j]
            assert abs(energy_delta(inst, x, j) - (energy(inst, y) - energy(inst, x))) < 1e-12


@given(st.integers(2, 9), st.integers(0, 2**31), st.data())
def test_flip_twice_is_identity(n, seed, data):
    inst = generate_instance(n, seed)
    x = np.array(data.draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n)))
    j = data.draw(st.integers(0, n - 1))
    y = x.copy()
    y[j] = -y[j]
    assert abs(energy_delta(inst, x, j) + energy_delta(inst, y, j)) < 1e-12


@given(st.integers(1, 9), st.integers(0, 2**31))
def test_global_flip_symmetry(n, seed):
    inst = generate_instance(n, seed)
    xs = all_spins(n)
    assert np.allclose(energy(inst, xs), energy(inst, -xs), atol=1e-12)


@given(st.integers(1, 10), st.integers(0, 2**20))
def test_index_round_trip(n, idx):
    idx %= 2**n
    assert index_from_spins(spins_from_index(idx, n)) == idx


def test_bit_convention():
    # bit j of the index is spin j, bit 0 means +1
    assert spins_from_index(0, 3).tolist() == [1, 1, 1]
    assert spins_from_index(1, 3).tolist() == [-1, 1, 1]
    assert spins_from_index(4, 3).tolist() == [1, 1, -1]


def test_enumeration_small_cases():
    assert enumerate_energies(generate_instance(1, 0)).tolist() == [0.0, 0.0]
    assert enumerate_energies(pair_instance()).tolist() == [-1.0, 1.0, 1.0, -1.0]


def test_enumeration_matches_energy():
    inst = generate_instance(6, 8)
    assert np.max(np.abs(enumerate_energies(inst) - energy(inst, all_spins(6)))) < 1e-12


def test_enumeration_cap():
    with pytest.raises(ResourceLimitError):
        enumerate_energies(generate_instance(5, 0), cap=4)


def test_infinite_temperature_is_uniform():
    _, p = exact_partition(BoltzmannTarget(generate_instance(5, 2), 0.0))
    assert np.allclose(p, 2.0**-5, atol=1e-15)


def test_single_spin_probabilities():
    _, p = exact_partition(BoltzmannTarget(generate_instance(1, 0), 3.0))
    assert p.tolist() == [0.5, 0.5]


def test_partition_function_matches_summation():
    inst = generate_instance(4, 17)
    J = inst.couplings.tolist()
    Z_ref = math.fsum(math.exp(-2.0 * brute_energy(J, x)) for x in itertools.product((1, -1), repeat=4))
    Z, p = exact_partition(BoltzmannTarget(inst, 2.0))
    assert abs(Z - Z_ref) < 1e-12 * Z_ref
    assert abs(p.sum() - 1) < 1e-12


def test_log_partition_survives_low_temperature():
    target = BoltzmannTarget(generate_instance(10, 1), 1e4)
    log_z, log_pi = log_partition(target)
    assert np.isfinite(log_z)
    assert abs(np.exp(log_pi).sum() - 1) < 1e-12


def test_negative_beta_rejected():
    with pytest.raises(InvalidArgumentError):
        BoltzmannTarget(generate_instance(3, 0), -1.0)


def test_instance_round_trip(tmp_path):
    inst = generate_instance(7, 4)
    inst.save(tmp_path / "i.json")
    back = SpinGlassInstance.load(tmp_path / "i.json")
    assert back.seed == 4 and np.array_equal(back.couplings, inst.couplings)
