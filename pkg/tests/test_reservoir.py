import math

import numpy as np
import pytest

from esngrad.numkernel import SparseMatrix, SparsePattern, spectral_radius
from esngrad.reservoir import (
    EsnConfig,
    ModelParams,
    forward_pass,
    init_network,
    renormalize_recurrent,
)


def small_cfg(**kw):
    base = dict(input_dim=3, hidden_dim=40, output_dim=2, density=0.1, seed=4)
    base.update(kw)
    return EsnConfig(**base)


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [dict(lam=4.0), dict(mu=-1.0), dict(alpha=0.0), dict(bptt_depth=0),
         dict(density=0.0), dict(density=0.001, hidden_dim=10)],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            small_cfg(**kw)

    def test_defaults(self):
        cfg = EsnConfig()
        assert (cfg.lam, cfg.mu, cfg.alpha) == (3.9, 1e-8, 0.07)


class TestInit:
    def test_deterministic(self):
        a = init_network(small_cfg())
        b = init_network(small_cfg())
        assert a.equals(b)
        assert a.W.tobytes() == b.W.tobytes()

    def test_spectral_radius_target(self):
        p = init_network(small_cfg(lam=3.9))
        assert abs(spectral_radius(p.W_rec) - 3.9) <= 1e-6

    def test_full_density(self):
        p = init_network(small_cfg(hidden_dim=4, density=1.0))
        assert p.W_rec.pattern.nnz == 16

    def test_shapes_and_ranges(self):
        cfg = small_cfg(input_scale=0.2)
        p = init_network(cfg)
        assert p.W.shape == (3, 40)
        assert np.all(np.abs(p.W) <= 0.2)
        assert p.U.shape == (43, 2) and not p.U.any()

    def test_empty_pattern_is_an_error(self):
        # one nonzero per row on average but a 1x1 reservoir drawn empty
        for seed in range(50):
            try:
                init_network(EsnConfig(input_dim=1, hidden_dim=1, output_dim=1, density=1.0, seed=seed))
            except ValueError:
                pytest.fail("full-density 1x1 reservoir cannot be empty")
        with pytest.raises(ValueError, match="spectral radius"):
            # strictly lower-triangular pattern is nilpotent
            renormalize_recurrent(SparseMatrix.from_dense(np.array([[0, 0], [1.0, 0]])), 3.9)


class TestRenormalize:
    def test_diagonal(self):
        w = SparseMatrix.from_dense(np.diag([2.0, 1.0]))
        out = renormalize_recurrent(w, 3.9)
        assert np.allclose(out.to_dense(), np.diag([3.9, 1.95]), rtol=0, atol=1e-12)
        assert out.pattern == w.pattern

    def test_idempotent(self):
        w = renormalize_recurrent(init_network(small_cfg()).W_rec, 3.9)
        again = renormalize_recurrent(w, 3.9)
        assert np.max(np.abs(again.values - w.values)) <= 1e-12

    @pytest.mark.parametrize("seed", range(3))
    def test_against_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        pat = SparsePattern.from_mask(rng.random((60, 60)) < 0.05)
        w = SparseMatrix(pat, rng.uniform(-1, 1, pat.nnz))
        out = renormalize_recurrent(w, 3.9)
        assert abs(np.max(np.abs(np.linalg.eigvals(out.to_dense()))) - 3.9) <= 1e-6


class TestForward:
    def test_zero_weights_give_half(self):
        W_rec = SparseMatrix(SparsePattern(3, 3, [0], [0]), [0.0])
        p = ModelParams(W=np.zeros((2, 3)), W_rec=W_rec, U=np.zeros((5, 1)))
        traj = forward_pass(p, np.random.default_rng(0).standard_normal((2, 6)))
        assert np.all(traj.H == 0.5)

    def test_scalar_step(self):
        W_rec = SparseMatrix(SparsePattern(1, 1, [0], [0]), [0.5])
        p = ModelParams(W=np.array([[1.0]]), W_rec=W_rec, U=np.zeros((2, 1)))
        traj = forward_pass(p, np.array([[0.2]]), h_init=[0.4])
        expected = 1.0 / (1.0 + math.exp(-0.4))
        assert traj.H[0, 0] == pytest.approx(expected, abs=1e-15)
        assert traj.H[0, 0] == pytest.approx(0.598687660112452, abs=1e-14)
        assert traj.H0[0, 0] == 0.4

    def test_washout_and_boundary_states(self, rng):
        p = init_network(small_cfg())
        x = rng.standard_normal((3, 30))
        full = forward_pass(p, x)
        cut = forward_pass(p, x, washout=10)
        assert cut.n_steps == 20
        assert np.array_equal(cut.H, full.H[:, 10:])
        assert np.array_equal(cut.H0[:, 1:], cut.H[:, :-1])
        assert np.array_equal(cut.X, x[:, 10:])

    def test_states_in_open_interval(self, rng):
        p = init_network(small_cfg(input_scale=1.0))
        traj = forward_pass(p, rng.standard_normal((3, 500)))
        assert np.all((traj.H > 0) & (traj.H < 1))

    def test_saturated_states_stay_in_closed_interval(self, rng):
        # float64 rounds sigmoid(z) to 1.0 once z exceeds about 37
        p = init_network(small_cfg(input_scale=30.0))
        traj = forward_pass(p, 5 * rng.standard_normal((3, 200)))
        assert np.all((traj.H >= 0) & (traj.H <= 1))

    def test_deterministic(self, rng):
        p = init_network(small_cfg())
        x = rng.standard_normal((3, 50))
        assert forward_pass(p, x).H.tobytes() == forward_pass(p, x).H.tobytes()

    def test_dimension_mismatch(self, rng):
        p = init_network(small_cfg())
        with pytest.raises(ValueError):
            forward_pass(p, rng.standard_normal((4, 10)))
        with pytest.raises(ValueError):
            forward_pass(p, rng.standard_normal((3, 10)), h_init=np.zeros(3))

    @pytest.mark.parametrize("seed", range(5))
    def test_fading_memory(self, seed):
        cfg = EsnConfig(input_dim=5, hidden_dim=100, output_dim=2, lam=3.9, seed=seed)
        p = init_network(cfg)
        rng = np.random.default_rng(100 + seed)
        x = rng.standard_normal((5, 300))
        a = forward_pass(p, x, h_init=np.zeros(100)).H
        b = forward_pass(p, x, h_init=rng.uniform(0, 1, 100)).H
        gap = np.linalg.norm(a - b, axis=0)
        assert gap[-1] < 1e-6
        # decreasing in trend: each 50-step window max below the previous one
        windows = gap.reshape(6, 50).max(axis=1)
        assert np.all(np.diff(windows) <= 0)
