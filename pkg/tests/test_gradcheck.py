import numpy as np
import pytest

from esngrad.gradcheck import (
    fd_check_input,
    fd_check_recurrent,
    make_instance,
    reduced_cost,
    run_grid,
    unroll,
)
from esngrad.readout import cost, train_readout


class TestReducedCost:
    def test_zero_targets(self):
        inst = make_instance(zero_targets=True)
        p = inst.params
        assert reduced_cost(p.W, p.W_rec, inst.X_blocks, inst.H0, inst.T) == 0.0

    def test_exact_fit(self):
        inst = make_instance(d=3, h=6, K=6, n=2, seed=3)
        p = inst.params
        E = reduced_cost(p.W, p.W_rec, inst.X_blocks, inst.H0, inst.T)
        assert abs(E) <= 1e-10 * np.sum(inst.T ** 2)

    @pytest.mark.parametrize("seed", range(5))
    def test_two_routes(self, seed):
        inst = make_instance(n=3, seed=seed)
        p = inst.params
        E = reduced_cost(p.W, p.W_rec, inst.X_blocks, inst.H0, inst.T)
        Hn = unroll(p.W, p.W_rec, inst.X_blocks, inst.H0)[-1]
        direct = cost(train_readout(Hn, inst.T, 0.0), Hn, inst.T)
        assert E == pytest.approx(direct, rel=0, abs=1e-10)


class TestFdChecks:
    def test_zero_targets(self):
        inst = make_instance(zero_targets=True)
        a, b = fd_check_input(inst), fd_check_recurrent(inst)
        for rep in (a, b):
            assert not rep.analytic.any() and not rep.numeric.any() and rep.passed

    def test_seeded_input_instance(self):
        rep = fd_check_input(make_instance(d=3, h=6, K=10, n=2, seed=0))
        assert rep.numeric.shape == (3, 6)
        assert rep.max_rel_error < 1e-4 and rep.passed

    def test_seeded_recurrent_instance(self):
        rep = fd_check_recurrent(make_instance(d=3, h=5, K=10, n=2, density=0.4, seed=0))
        assert rep.max_rel_error < 1e-4 and rep.passed

    def test_literal_formula_is_recorded(self):
        rep = fd_check_recurrent(make_instance(n=2, seed=1))
        # the matrix-power reading is exact for one step only
        assert rep.extra["literal_max_rel_error"] > 1e-2
        rep1 = fd_check_recurrent(make_instance(n=1, seed=1))
        assert rep1.extra["literal_max_rel_error"] < 1e-4

    def test_epsilon_sweep_is_v_shaped(self):
        inst = make_instance(d=3, h=6, K=10, n=2, seed=2)
        errs = {e: fd_check_input(inst, eps=e).max_rel_error for e in (1e-2, 1e-5, 1e-11)}
        assert errs[1e-5] < errs[1e-2] and errs[1e-5] < errs[1e-11]

    def test_large_epsilon_fails(self):
        assert not fd_check_input(make_instance(n=2, seed=0), eps=1e-2).passed

    def test_shortcut_variant(self):
        inst = make_instance(d=3, h=5, K=14, n=2, seed=4, shortcut=True)
        assert fd_check_input(inst).passed and fd_check_recurrent(inst).passed

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_grid(self, n):
        reports = run_grid(depths=(n,), seeds=range(5))
        assert len(reports) == 20
        assert all(r.passed for r in reports)

    def test_tsv(self):
        rep = fd_check_input(make_instance(n=1))
        lines = rep.to_tsv().splitlines()
        assert lines[0].split("\t") == ["entry", "analytic", "numeric", "rel_error"]
        assert len(lines) == 1 + rep.analytic.size
