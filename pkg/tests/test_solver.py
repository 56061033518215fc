import csv

import numpy as np
import pytest

from mnra.linalg import hard_threshold_rank
from mnra.operators import SamplingOperator
from mnra.problems import make_instance, rel_err
from mnra.solver import (
    DivergenceError,
    SolverConfig,
    iht_step,
    solve,
    solve_fixed_rank,
    solve_heuristic_rank,
    stopping_check,
)
from mnra.tensor import fold, unfold


def full_operator(shape):
    return SamplingOperator(shape, np.arange(int(np.prod(shape))))


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(tau=0), dict(tau=-1), dict(weights=(0.5, 0.6)), dict(weights=(1.5, -0.5)),
         dict(xi=0), dict(xi=1), dict(svd="lanczos"), dict(max_iter=0)],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)

    def test_uniform_default_weights(self):
        np.testing.assert_allclose(SolverConfig().mode_weights(4), [0.25] * 4)

    def test_weight_count_must_match_order(self):
        with pytest.raises(ValueError):
            SolverConfig(weights=(0.5, 0.5)).mode_weights(3)


class TestStoppingCheck:
    def test_identical(self):
        x = np.ones((2, 2))
        assert stopping_check(x, x, 1e-12)

    def test_denominator_clamped_to_one(self):
        x_next = np.zeros((2, 2))
        x_next[0, 0] = 0.5
        assert not stopping_check(np.zeros((2, 2)), x_next, 1e-8)

    def test_exact_boundary_is_not_converged(self):
        x_prev = np.zeros(4)
        x_prev[0] = 4.0
        x_next = x_prev.copy()
        x_next[1] = 0.5  # ratio 0.5 / 4 = 0.125, exact in binary
        assert not stopping_check(x_prev, x_next, 0.125)
        assert stopping_check(x_prev, x_next, np.nextafter(0.125, 1))


class TestStep:
    def test_fixed_point_at_ground_truth(self):
        for seed in range(5):
            inst = make_instance((8, 9, 10), (2, 3, 2), 0.5, seed=seed)
            out = iht_step(inst.ground_truth, inst.operator, inst.b, inst.true_rank)
            assert rel_err(out, inst.ground_truth) <= 1e-9

    def test_zero_ranks_give_zero(self):
        inst = make_instance((4, 5, 6), (2, 2, 2), 0.5, seed=1)
        assert not iht_step(np.zeros(inst.shape), inst.operator, inst.b, (0, 0, 0)).any()

    def test_one_step_full_observation_closed_form(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((4, 5, 6))
        op = full_operator(m.shape)
        ranks = (2, 3, 2)
        cfg = SolverConfig(tau=1.0)
        out = iht_step(np.zeros(m.shape), op, op.apply(m), ranks, cfg)
        expected = sum(fold(hard_threshold_rank(unfold(m, i), r), i, m.shape) for i, r in enumerate(ranks)) / 3
        np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)


class TestFixedRank:
    def test_zero_data_stops_after_one_iteration(self):
        op = full_operator((3, 4, 5))
        res = solve_fixed_rank(op, np.zeros(len(op)), (1, 1, 1))
        assert res.iterations == 1 and res.converged
        assert not res.solution.any()

    def test_rank_one_cube_fully_observed(self):
        m = np.einsum("i,j,k->ijk", [1.0, -2.0], [0.5, 3.0], [2.0, 1.0])
        op = full_operator(m.shape)
        res = solve_fixed_rank(op, op.apply(m), (1, 1, 1), SolverConfig(tol=1e-14))
        assert res.iterations <= 50
        assert np.linalg.norm(res.solution - m) <= 1e-10

    def test_small_random_instance(self):
        inst = make_instance((20, 30, 40), (2, 2, 2), 0.6, seed=0)
        res = solve_fixed_rank(inst.operator, inst.b, inst.true_rank)
        assert res.converged and res.iterations <= 100
        assert rel_err(res.solution, inst.ground_truth) <= 1e-7

    def test_trace_consistency(self, tmp_path):
        inst = make_instance((10, 12, 14), (2, 2, 2), 0.6, seed=3)
        res = solve_fixed_rank(inst.operator, inst.b, inst.true_rank)
        tr = res.trace
        assert len(tr) == res.iterations == len(tr.residual) == len(tr.grad_norm) == len(tr.ranks)
        assert res.converged == (tr.rel_change[-1] < 1e-8)
        assert all(np.isfinite(tr.rel_change)) and all(np.diff(tr.seconds) >= 0)
        path = tmp_path / "trace.csv"
        tr.to_csv(path, res.status)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["iter", "rel_change", "residual", "grad_norm", "r_1", "r_2", "r_3", "seconds", "flag"]
        assert len(rows) == res.iterations + 1
        assert rows[-1][-1] == "converged" and all(r[-1] == "" for r in rows[1:-1])

    def test_max_iter_reported_not_raised(self):
        inst = make_instance((10, 12, 14), (2, 2, 2), 0.6, seed=4)
        res = solve_fixed_rank(inst.operator, inst.b, inst.true_rank, SolverConfig(max_iter=3))
        assert res.iterations == 3 and not res.converged and res.status == "max_iter"

    def test_single_mode_residual_monotone(self):
        # weights (1, 0) reduce the update to matrix IHT on the mode-1 unfolding
        rng = np.random.default_rng(5)
        m = rng.standard_normal((15, 3)) @ rng.standard_normal((3, 12))
        op = SamplingOperator.from_mask(rng.random(m.shape) < 0.7)
        res = solve_fixed_rank(op, op.apply(m), (3, 3), SolverConfig(tau=1.0, weights=(1.0, 0.0), max_iter=300))
        r = np.array(res.trace.residual)
        assert np.all(np.diff(r) <= 1e-12 * r[0])

    def test_geometric_decay(self):
        inst = make_instance((20, 30, 40), (2, 2, 2), 0.6, seed=6)
        errs = []
        res = solve_fixed_rank(inst.operator, inst.b, inst.true_rank,
                               callback=lambda k, x: errs.append(np.linalg.norm(x - inst.ground_truth)))
        tail = np.log(errs[-21:-1])
        slope = np.polyfit(np.arange(tail.size), tail, 1)[0]
        assert res.converged and slope < 0

    def test_divergent_step_size_raises(self):
        inst = make_instance((8, 8, 8), (2, 2, 2), 1.0, seed=7)
        with pytest.raises(DivergenceError, match="tau"):
            solve_fixed_rank(inst.operator, inst.b, inst.true_rank, SolverConfig(tau=5.0))

    def test_sketch_path(self):
        inst = make_instance((20, 30, 40), (2, 2, 2), 0.6, seed=8)
        res = solve_fixed_rank(inst.operator, inst.b, inst.true_rank, SolverConfig(svd="sketch", sketch_seed=8))
        assert res.converged and rel_err(res.solution, inst.ground_truth) <= 1e-7


class TestHeuristicRank:
    def test_zero_problem(self):
        op = full_operator((4, 5, 6))
        res = solve_heuristic_rank(op, np.zeros(len(op)))
        assert res.iterations == 1 and not res.solution.any()

    def test_initial_rank_is_half_mode_length(self):
        inst = make_instance((7, 8, 9), (2, 2, 2), 0.6, seed=0)
        res = solve(inst.operator, inst.b, SolverConfig(max_iter=1))
        assert res.trace.ranks[0] == (4, 4, 5)

    def test_recovers_rank_noiseless_sketch(self):
        inst = make_instance((20, 30, 40), (2, 2, 2), 0.6, seed=1)
        res = solve_heuristic_rank(inst.operator, inst.b, SolverConfig(svd="sketch", xi=1e-2, sketch_seed=1))
        assert res.converged and res.iterations <= 120
        assert res.final_rank == (2, 2, 2)
        assert rel_err(res.solution, inst.ground_truth) <= 1e-7

    def test_ranks_capped(self):
        # a 2 x 2 x 8 tensor caps mode-3 rank at T_3 = 4
        inst = make_instance((2, 2, 8), (1, 1, 1), 0.5, sigma=1.0, seed=2)
        res = solve_heuristic_rank(inst.operator, inst.b, SolverConfig(max_iter=50, xi=1e-3))
        caps = (2, 2, 4)
        assert all(r <= c for ranks in res.trace.ranks for r, c in zip(ranks, caps))
