"""Solver: satisfiability, optimization, entailment, elimination.

Exhaustive enumeration over the bounded domains is the oracle throughout.
"""

import itertools
import random

from xrpt.constraints import (
    Cmp, Const, Not, TRUE, FALSE, Var, conj, evaluate, parse_constraint,
    push_negations, substitute, violations_degree,
)
from xrpt.solver import (
    eliminate_vars, equivalent, is_weaker_or_equal, optimize_model,
    random_model, sat_model,
)
from conftest import random_formula


def enumerate_models(free: dict, fixed: dict, formula):
    names = sorted(free)
    f = push_negations(substitute(formula, fixed))
    for combo in itertools.product(*(range(free[n][0], free[n][1] + 1)
                                     for n in names)):
        env = dict(zip(names, combo))
        if evaluate(f, env):
            yield env


class TestSatModel:
    def test_lex_smallest(self):
        ok, model = sat_model({"i": (0, 25)}, {}, parse_constraint("i >= 2"))
        assert ok and model == {"i": 2}

    def test_guard_with_fixed_state(self):
        guard = parse_constraint("y <= 5 && (x >= 11 || (i >= 2 && i <= 5))")
        ok, model = sat_model({"i": (0, 25)}, {"x": 10, "y": 0, "z": 0}, guard)
        assert ok and model == {"i": 2}

    def test_unsat_domain_bound(self):
        ok, model = sat_model({"i": (0, 25)}, {}, parse_constraint("i > 25"))
        assert not ok and model == {}

    def test_unsat_via_update_domain(self, m1):
        # z := z - 1 leaves the domain at z = 0
        t_x = m1.transitions["t_x"]
        formula = conj([t_x.guard, substitute(m1.domain(["x", "y", "z", "i"]),
                                              dict(t_x.update))])
        ok, _ = sat_model({"i": (0, 25)}, {"x": 10, "y": 0, "z": 0}, formula)
        assert not ok

    def test_matches_enumeration(self):
        rng = random.Random(3)
        checked = 0
        for _ in range(400):
            n = rng.randint(1, 3)
            names = [f"u{i}" for i in range(n)]
            hi = 20 if n < 3 else 6
            free = {v: (0, hi) for v in names}
            c = random_formula(rng, names, depth=2)
            ok, model = sat_model(free, {}, c)
            oracle = next(iter(enumerate_models(free, {}, c)), None)
            assert ok == (oracle is not None)
            if ok:
                assert evaluate(push_negations(c), model)
                assert model == oracle  # lexicographically smallest
            checked += 1
        assert checked == 400

    def test_deterministic(self):
        rng = random.Random(5)
        for _ in range(50):
            c = random_formula(rng, ["a", "b"])
            r1 = sat_model({"a": (0, 9), "b": (0, 9)}, {}, c)
            r2 = sat_model({"a": (0, 9), "b": (0, 9)}, {}, c)
            assert r1 == r2

    def test_custom_order(self):
        c = parse_constraint("a + b = 4")
        ok, model = sat_model({"a": (0, 9), "b": (0, 9)}, {}, c, order=["b", "a"])
        assert ok and model == {"b": 0, "a": 4}

    def test_wide_domain(self):
        c = parse_constraint("q >= 31990 && q <= 31995")
        ok, model = sat_model({"q": (0, 32000)}, {}, c)
        assert ok and model == {"q": 31990}


class TestOptimizeModel:
    def test_worked_example_input_optimization(self):
        # minimize the violation of the pulled-back target constraint
        obj = substitute(parse_constraint("x = 10 && y = 6 && z = 2"),
                         {"x": Var("i"), "y": 0, "z": 0})
        ok, model = optimize_model({"i": (0, 25)}, {}, TRUE, obj)
        assert ok and model == {"i": 10}
        assert violations_degree(obj, model) == 8

    def test_infeasible(self):
        ok, model = optimize_model({"i": (0, 5)}, {}, FALSE, TRUE)
        assert not ok and model == {}

    def test_global_minimum_vs_enumeration(self):
        rng = random.Random(17)
        for _ in range(300):
            n = rng.randint(1, 2)
            names = [f"u{i}" for i in range(n)]
            free = {v: (0, 20) for v in names}
            feas = random_formula(rng, names, depth=1)
            obj = push_negations(random_formula(rng, names, depth=1))
            ok, model = optimize_model(free, {}, feas, obj)
            models = list(enumerate_models(free, {}, feas))
            assert ok == bool(models)
            if ok:
                best = min(violations_degree(obj, e) for e in models)
                assert violations_degree(obj, model) == best
                # lexicographic tie-break among minimizers
                tied = [e for e in models if violations_degree(obj, e) == best]
                wanted = min(tied, key=lambda e: tuple(e[v] for v in sorted(e)))
                assert model == wanted

    def test_result_never_worse_than_sat(self):
        rng = random.Random(19)
        for _ in range(100):
            names = ["a", "b"]
            free = {v: (0, 12) for v in names}
            feas = random_formula(rng, names, depth=1)
            obj = push_negations(random_formula(rng, names, depth=1))
            ok1, sat = sat_model(free, {}, feas)
            ok2, opt = optimize_model(free, {}, feas, obj)
            assert ok1 == ok2
            if ok1:
                assert violations_degree(obj, opt) <= violations_degree(obj, sat)


class TestEntailment:
    BOUNDS = {"x": (0, 25), "a": (0, 5), "b": (0, 5)}
    DOM = parse_constraint("x >= 0 && x <= 25")

    def test_true_is_weakest(self):
        assert is_weaker_or_equal(TRUE, parse_constraint("x = 3"),
                                  self.DOM, self.BOUNDS)

    def test_domain_equivalent_bound(self):
        assert is_weaker_or_equal(parse_constraint("x <= 25"), TRUE,
                                  self.DOM, self.BOUNDS)
        assert not is_weaker_or_equal(parse_constraint("x <= 10"), TRUE,
                                      self.DOM, self.BOUNDS)

    def test_agrees_with_truth_tables(self):
        rng = random.Random(29)
        dom = parse_constraint("a >= 0 && a <= 5 && b >= 0 && b <= 5")
        for _ in range(200):
            c = random_formula(rng, ["a", "b"], depth=2)
            d = random_formula(rng, ["a", "b"], depth=2)
            got = is_weaker_or_equal(c, d, dom, self.BOUNDS)
            want = all(evaluate(c, {"a": a, "b": b})
                       for a in range(6) for b in range(6)
                       if evaluate(d, {"a": a, "b": b}))
            assert got == want

    def test_equivalent(self):
        c = parse_constraint("x - 1 = 10")
        d = parse_constraint("x = 11")
        assert equivalent(c, d, self.DOM, self.BOUNDS)


class TestElimination:
    def test_forced_equality(self):
        c = parse_constraint("i = 4 && x + i = 10")
        out = eliminate_vars(c, {"i": (0, 25)}, {"i": (0, 25), "x": (0, 25)})
        assert not out.free_vars() - {"x"}
        assert evaluate(out, {"x": 6}) and not evaluate(out, {"x": 5})

    def test_matches_enumeration_semantics(self):
        rng = random.Random(37)
        bounds = {"a": (0, 5), "b": (0, 5), "e": (0, 5)}
        for _ in range(150):
            c = random_formula(rng, ["a", "b", "e"], depth=2)
            out = eliminate_vars(c, {"e": (0, 5)}, bounds)
            assert "e" not in out.free_vars()
            cn = push_negations(c)
            for a in range(6):
                for b in range(6):
                    want = any(evaluate(cn, {"a": a, "b": b, "e": e})
                               for e in range(6))
                    got = evaluate(push_negations(out), {"a": a, "b": b})
                    assert got == want


class TestRandomModel:
    def test_complete_on_satisfiable(self):
        rng = random.Random(43)
        c = parse_constraint("a >= 3 && a <= 3 && b = 2")
        for _ in range(20):
            ok, model = random_model({"a": (0, 9), "b": (0, 9)}, {}, c, rng)
            assert ok and model == {"a": 3, "b": 2}

    def test_spreads_over_models(self):
        rng = random.Random(47)
        c = parse_constraint("a >= 0")
        values = {random_model({"a": (0, 9)}, {}, c, rng)[1]["a"]
                  for _ in range(200)}
        assert len(values) >= 8
