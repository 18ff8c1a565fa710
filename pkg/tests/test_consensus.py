"""Accelerated gossip: mean preservation, contraction, round targeting."""

import numpy as np
import pytest

from decopt.consensus import (
    C1,
    C2,
    consensus_error,
    contraction_factor,
    fastmix,
    rounds_for_target,
)
from decopt.topology import build_graph, metropolis_weights


def _random_mix(rng, m=None):
    m = m or int(rng.integers(3, 17))
    g = build_graph("erdos_renyi", m, edge_prob=0.5,
                    seed=int(rng.integers(1 << 30)))
    return metropolis_weights(g)


class TestFastmix:
    def test_zero_rounds_identity(self):
        mix = metropolis_weights(build_graph("path", 4))
        z = np.arange(12.0).reshape(4, 3)
        out = fastmix(z, mix, 0)
        assert np.array_equal(out, z)
        assert out is not z  # copy, not alias

    def test_consensus_is_fixed_point(self):
        mix = metropolis_weights(build_graph("path", 5))
        z = np.tile(np.array([2.0, -1.0]), (5, 1))
        out = fastmix(z, mix, 7)
        assert np.allclose(out, z, atol=1e-12)

    def test_full_averaging_one_round(self):
        # lambda2 = 0 makes the momentum weight vanish; one multiply by the
        # averaging matrix reaches exact consensus.
        mix = metropolis_weights(build_graph("complete", 4))
        rng = np.random.default_rng(0)
        z = rng.normal(size=(4, 3))
        out = fastmix(z, mix, 1)
        assert np.allclose(out, z.mean(axis=0), atol=1e-12)

    def test_mean_preserved(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            mix = _random_mix(rng)
            d = int(rng.integers(1, 9))
            z = rng.normal(size=(mix.W.shape[0], d)) * 10
            rounds = int(rng.integers(0, 30))
            out = fastmix(z, mix, rounds)
            assert np.abs(out.mean(axis=0) - z.mean(axis=0)).max() < 1e-10

    def test_row_count_mismatch(self):
        mix = metropolis_weights(build_graph("path", 3))
        with pytest.raises(ValueError, match="nodes"):
            fastmix(np.zeros((4, 2)), mix, 1)

    def test_contraction_envelope(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            mix = _random_mix(rng)
            z = rng.normal(size=(mix.W.shape[0], int(rng.integers(1, 6))))
            rounds = int(rng.integers(0, 41))
            before = consensus_error(z)
            after = consensus_error(fastmix(z, mix, rounds))
            bound = contraction_factor(rounds, mix.chi) * before
            assert after <= bound + 1e-9


class TestConsensusError:
    def test_identical_rows_zero(self):
        z = np.tile(np.array([1.0, 2.0, 3.0]), (6, 1))
        assert consensus_error(z) == 0.0

    def test_two_scalar_nodes(self):
        assert consensus_error(np.array([[0.0], [2.0]])) == pytest.approx(
            np.sqrt(2.0), abs=1e-14)


class TestRoundsForTarget:
    def test_loose_target_zero_rounds(self):
        assert rounds_for_target(0.5, C1) == 0
        assert rounds_for_target(0.5, 100.0) == 0

    def test_full_gap_example(self):
        # chi = 1: factor shrinks by 1/sqrt(2) per round; the smallest R with
        # sqrt(14) * 2**(-R/2) <= 1e-3 is 24.
        assert rounds_for_target(1.0, 1e-3) == 24
        assert contraction_factor(24, 1.0) <= 1e-3
        assert contraction_factor(23, 1.0) > 1e-3

    def test_minimality(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            chi = float(rng.uniform(0.01, 1.0))
            target = float(10.0 ** rng.uniform(-6, 1))
            r = rounds_for_target(chi, target)
            assert contraction_factor(r, chi) <= target
            if r > 0:
                assert contraction_factor(r - 1, chi) > target

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            rounds_for_target(0.0, 0.5)
        with pytest.raises(ValueError):
            rounds_for_target(0.5, 0.0)


def test_envelope_constants():
    assert C1 == pytest.approx(np.sqrt(14.0), abs=0)
    assert C2 == pytest.approx(1.0 - 1.0 / np.sqrt(2.0), abs=0)
