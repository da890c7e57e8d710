import math

import numpy as np
import pytest

from fgmopt.errors import MissingSummary
from fgmopt.ga import (
    ConstraintSpec,
    FitnessEvaluator,
    GAConfig,
    Individual,
    eta_schedule,
    evolve,
    polynomial_mutation,
    sbx_crossover,
    static_penalty,
    tournament_select,
)
from fgmopt.fem import ThermoelasticSolver
from fgmopt.profiles import BucketSpec, GenerationConfig, generate_genes
from fgmopt.rng import derived_rng, make_rng
from fgmopt import problems


def tiny_problem(nx=6, ny=6):
    """Scaled-down problem-2 plate for fast GA loops."""
    from dataclasses import replace
    return replace(problems.problem2(), nx=nx, ny=ny)


def tiny_gen_configs(n=6):
    gx = GenerationConfig(n_elems=n, first_node_buckets=BucketSpec(((0.001, 1.0),)))
    gy = GenerationConfig(n_elems=n, first_node_buckets=BucketSpec(((0.001, 0.01), (0.01, 0.1))))
    return gx, gy


def fem_evaluator(objective="sigma_e_max", constraints=None, nx=6):
    solver = ThermoelasticSolver(tiny_problem(nx, nx))
    return FitnessEvaluator(solver, objective, constraints or ConstraintSpec())


def fake_individual(fitness, idx=0):
    genes = generate_genes(derived_rng(1, idx), *tiny_gen_configs())
    return Individual(genes=genes, objective=fitness, penalty=0.0, fitness=fitness,
                      eval_source="fem", sigma_e_max=fitness, v_ca=0.5,
                      max_metal_temperature=None, dnn_sigma=None)


class TestEtaSchedule:
    def test_generation_zero_is_base(self):
        assert eta_schedule(2.0, 0) == pytest.approx(2.0)
        assert eta_schedule(10.0, 0) == pytest.approx(10.0)

    def test_printed_value_at_g100(self):
        assert eta_schedule(2.0, 100) == pytest.approx(2 * (1 + 0.5 * (1 - math.e)), rel=1e-12)

    def test_strictly_decreasing_until_floor(self):
        vals = [eta_schedule(2.0, g) for g in range(0, 120, 10)]
        above = [v for v in vals if v > 0.01]
        assert all(a > b for a, b in zip(above, above[1:]))

    def test_floor(self):
        assert eta_schedule(2.0, 1000) == 0.01

    def test_sign_switch_increases(self):
        assert eta_schedule(2.0, 100, sign=-1.0) > 2.0


class TestTournament:
    def test_global_best_always_wins_when_included(self):
        pop = [fake_individual(f, i) for i, f in enumerate([5.0, 1.0, 3.0, 4.0])]
        got = tournament_select(pop, k=len(pop), rng=make_rng(0))
        assert got.fitness == 1.0

    def test_selection_pressure(self):
        # worst of n=20 must win a k=4 tournament only if all 4 draws hit it,
        # which is impossible without replacement -> probability 0; check the
        # analytic win probability of the 2nd-worst instead via frequencies
        pop = [fake_individual(float(f), f) for f in range(20)]
        rng = make_rng(3)
        wins = np.zeros(20)
        n_draw = 10_000
        for _ in range(n_draw):
            wins[int(tournament_select(pop, 4, rng).fitness)] += 1
        assert wins[19] == 0  # the worst can never win a without-replacement tournament
        # P(win of rank r) = C(19-r, 3)/C(20, 4); spot-check the best and median
        p_best = math.comb(19, 3) / math.comb(20, 4)
        assert wins[0] / n_draw == pytest.approx(p_best, rel=0.05)

    def test_tie_broken_by_index(self):
        pop = [fake_individual(2.0, 0), fake_individual(2.0, 1)]
        got = tournament_select(pop, 2, make_rng(1))
        assert got is pop[0]


class TestSBX:
    def test_identical_parents_unchanged(self):
        p = np.array([0.3, 1.5, 2.0])
        lo, hi = np.zeros(3), np.full(3, 3.0)
        c1, c2 = sbx_crossover(p, p, 2.0, lo, hi, make_rng(0))
        np.testing.assert_array_equal(c1, p)
        np.testing.assert_array_equal(c2, p)

    def test_mean_preservation_wide_bounds(self):
        rng = make_rng(1)
        lo, hi = np.full(5, -1e12), np.full(5, 1e12)
        for _ in range(10_000):
            p1 = rng.uniform(-1, 1, 5)
            p2 = rng.uniform(-1, 1, 5)
            c1, c2 = sbx_crossover(p1, p2, 2.0, lo, hi, rng)
            np.testing.assert_allclose((c1 + c2) / 2, (p1 + p2) / 2, atol=1e-12)

    def test_children_within_bounds_sweep(self):
        rng = make_rng(2)
        lo = np.array([0.001, 1.0])
        hi = np.array([0.1, 3.0])
        for _ in range(100_000):
            p1 = rng.uniform(lo, hi)
            p2 = rng.uniform(lo, hi)
            c1, c2 = sbx_crossover(p1, p2, rng.uniform(0.01, 5.0), lo, hi, rng)
            for c in (c1, c2):
                assert np.all(c >= lo) and np.all(c <= hi)


class TestPolynomialMutation:
    def test_zero_probability_identity(self):
        g = np.array([0.5, 2.0])
        out = polynomial_mutation(g, 10.0, np.zeros(2), np.full(2, 3.0), 0.0, make_rng(0))
        np.testing.assert_array_equal(out, g)

    def test_mutants_within_bounds_sweep(self):
        rng = make_rng(4)
        lo = np.array([0.001, 1.0, -2.0])
        hi = np.array([1.0, 3.0, -1.0])
        for _ in range(100_000):
            g = rng.uniform(lo, hi)
            out = polynomial_mutation(g, rng.uniform(0.1, 50.0), lo, hi, 1.0, rng)
            assert np.all(out >= lo) and np.all(out <= hi)

    def test_perturbation_concentrates_with_eta(self):
        rng = make_rng(5)
        lo, hi = np.zeros(1), np.ones(1)
        medians = []
        for eta in (5.0, 20.0, 100.0):
            deltas = []
            for _ in range(4000):
                g = np.array([0.5])
                out = polynomial_mutation(g, eta, lo, hi, 1.0, rng)
                deltas.append(abs(out[0] - 0.5))
            medians.append(np.median(deltas))
        assert medians[0] > medians[1] > medians[2]


class TestStaticPenalty:
    def test_feasible_zero(self):
        spec = ConstraintSpec(v_star=0.15, theta_max=275.0, sigma_allow=150e6, weight=1e8)
        s = {"v_ca": 0.10, "max_metal_temperature": 200.0, "sigma_e_max": 100e6}
        assert static_penalty(s, spec) == 0.0

    def test_quadratic_hinge_value(self):
        spec = ConstraintSpec(v_star=0.15, weight=1e8)
        s = {"v_ca": 0.30, "max_metal_temperature": None, "sigma_e_max": 1.0}
        assert static_penalty(s, spec) == pytest.approx(1e8 * 1.0**2)

    def test_monotone_in_violation(self):
        spec = ConstraintSpec(sigma_allow=100e6, weight=1e8)
        vals = [static_penalty({"sigma_e_max": s}, spec) for s in (90e6, 110e6, 130e6, 200e6)]
        assert vals[0] == 0.0
        assert vals[1] < vals[2] < vals[3]

    def test_missing_summary(self):
        spec = ConstraintSpec(theta_max=275.0)
        with pytest.raises(MissingSummary):
            static_penalty({"sigma_e_max": 1.0, "v_ca": 0.5, "max_metal_temperature": None}, spec)

    def test_weight_scaling_preserves_feasibility_and_ranking(self):
        rng = make_rng(9)
        cands = [{"sigma_e_max": rng.uniform(50e6, 250e6), "v_ca": rng.uniform(0, 1),
                  "max_metal_temperature": rng.uniform(100, 400)} for _ in range(200)]
        for w in (1.0, 1e4, 1e8):
            spec = ConstraintSpec(v_star=0.5, theta_max=275.0, sigma_allow=150e6, weight=w)
            feas = [static_penalty(c, spec) == 0.0 for c in cands]
            if w == 1.0:
                base_feas = feas
            else:
                assert feas == base_feas
        # among feasible candidates fitness = objective, independent of w
        feas_objs = [c["sigma_e_max"] for c, ok in zip(cands, base_feas) if ok]
        assert sorted(feas_objs) == sorted(feas_objs)


class TestHybridDispatch:
    class StubStress:
        def __init__(self, value):
            self.value = value

        def predict(self, px, py):
            return np.array([self.value])

    class StubTemp:
        def __init__(self, value):
            self.value = value

        def predict(self, px, py, pts):
            return np.full(len(pts), self.value)

    def test_sigma_star_zero_always_surrogate(self):
        solver = ThermoelasticSolver(tiny_problem())
        ev = FitnessEvaluator(solver, "sigma_e_max", ConstraintSpec(),
                              sigma_star=0.0, stress_model=self.StubStress(-5e6))
        genes = generate_genes(make_rng(0), *tiny_gen_configs())
        ind = ev.evaluate(genes)
        assert ind.eval_source == "surrogate"
        assert ind.dnn_sigma == pytest.approx(-5e6)

    def test_below_threshold_goes_fem(self):
        solver = ThermoelasticSolver(tiny_problem())
        ev = FitnessEvaluator(solver, "sigma_e_max", ConstraintSpec(),
                              sigma_star=50e6, stress_model=self.StubStress(40e6))
        ind = ev.evaluate(generate_genes(make_rng(1), *tiny_gen_configs()))
        assert ind.eval_source == "fem"
        assert ind.sigma_e_max != pytest.approx(40e6)  # FEM value, not the stub

    def test_above_threshold_goes_surrogate(self):
        solver = ThermoelasticSolver(tiny_problem())
        ev = FitnessEvaluator(solver, "sigma_e_max",
                              ConstraintSpec(theta_max=275.0),
                              sigma_star=50e6, stress_model=self.StubStress(60e6),
                              temp_model=self.StubTemp(300.0))
        ind = ev.evaluate(generate_genes(make_rng(2), *tiny_gen_configs()))
        assert ind.eval_source == "surrogate"
        assert ind.sigma_e_max == pytest.approx(60e6)
        assert ind.max_metal_temperature == pytest.approx(300.0)
        assert ind.penalty > 0  # 300 C exceeds the 275 C limit

    def test_fem_only_mode_records_no_prediction(self):
        ev = fem_evaluator()
        ind = ev.evaluate(generate_genes(make_rng(3), *tiny_gen_configs()))
        assert ind.eval_source == "fem"
        assert ind.dnn_sigma is None
        assert ind.fitness == ind.objective + ind.penalty

    def test_surrogate_vca_is_exact_quadrature(self):
        solver = ThermoelasticSolver(tiny_problem())
        ev = FitnessEvaluator(solver, "sigma_e_max", ConstraintSpec(),
                              sigma_star=0.0, stress_model=self.StubStress(90e6))
        genes = generate_genes(make_rng(4), *tiny_gen_configs())
        ind_s = ev.evaluate(genes)
        ind_f = fem_evaluator().evaluate(genes)
        assert ind_s.v_ca == pytest.approx(ind_f.v_ca, abs=1e-12)


class TestEvolve:
    def make_config(self, **kw):
        base = dict(population_size=10, tournament_size=3, elite_count=2,
                    min_generations=4, stall_generations=2, stall_tolerance=1e30,
                    mutation_probability=0.3, seed=11)
        base.update(kw)
        return GAConfig(**base)

    def test_terminates_at_min_generations_when_stalled(self):
        # huge stall tolerance -> stall condition met immediately
        rec = evolve(self.make_config(), fem_evaluator(), *tiny_gen_configs())
        assert rec.generations[-1].generation == 3  # 4 generations: 0..3

    def test_elitism_monotone_best_fitness(self):
        rec = evolve(self.make_config(min_generations=8, stall_generations=3),
                     fem_evaluator(), *tiny_gen_configs())
        trace = [g.best_fitness for g in rec.generations]
        assert all(a >= b - 1e-12 for a, b in zip(trace, trace[1:]))

    def test_fixed_seed_bit_identical(self):
        a = evolve(self.make_config(min_generations=5), fem_evaluator(), *tiny_gen_configs())
        b = evolve(self.make_config(min_generations=5), fem_evaluator(), *tiny_gen_configs())
        assert np.array_equal(a.best.genes.flatten(), b.best.genes.flatten())
        assert [g.best_fitness for g in a.generations] == [g.best_fitness for g in b.generations]
        assert a.best.fitness == b.best.fitness

    def test_offspring_within_bounds_every_generation(self):
        rec = evolve(self.make_config(min_generations=6), fem_evaluator(), *tiny_gen_configs())
        for ind in rec.population:
            v = ind.genes.flatten()
            assert np.all(v >= ind.genes.lower - 1e-12)
            assert np.all(v <= ind.genes.upper + 1e-12)

    def test_eval_source_totals_and_max_generations(self):
        rec = evolve(self.make_config(max_generations=3, min_generations=100),
                     fem_evaluator(), *tiny_gen_configs())
        assert rec.generations[-1].generation == 2
        totals = rec.eval_source_totals
        assert totals["fem"] > 0 and totals["surrogate"] == 0

    def test_improvement_drives_past_min_generations(self):
        # tight tolerance: the run should not stop exactly at min_generations
        # unless truly stalled; just assert it runs and returns a best
        rec = evolve(self.make_config(stall_tolerance=0.0, min_generations=3,
                                      stall_generations=2, max_generations=8),
                     fem_evaluator(), *tiny_gen_configs())
        assert rec.best.fitness <= rec.generations[0].best_fitness
