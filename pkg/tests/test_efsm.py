"""Machine structure: out/rivals/enabled/apply, traps, validation, round-trip."""

import random

import pytest

from xrpt.constraints import TRUE, parse_constraint, render
from xrpt.efsm import (
    DomainViolationError, EfsmState, ILABEL, ModelError, NotEnabledError,
    Trap, Transition, UnknownLocationError, VarDecl, VarKind, load_bundled,
    model_from_dict, model_to_dict, trap_covered_by,
)
from conftest import random_small_model


class TestStructure:
    def test_out_l0(self, m1):
        assert [t.id for t in m1.out("l0")] == ["t1"]

    def test_out_l1(self, m1):
        assert sorted(t.id for t in m1.out("l1")) == ["t_2", "t_x", "t_y", "t_z"]

    def test_out_empty_location(self):
        doc = _tiny_doc()
        doc["locations"].append("sink")
        doc["transitions"].append({
            "id": "tq", "source": "a", "target": "sink",
            "input": "go", "output": "alt", "params": [], "guard": "true",
            "update": ""})
        m = model_from_dict(doc)
        assert m.out("sink") == ()

    def test_unknown_location(self, m1):
        with pytest.raises(UnknownLocationError):
            m1.out("nowhere")

    def test_rival_pairs_of_counter_model(self, m1):
        rivals = {t: sorted(r.id for r in m1.rivals(m1.transitions[t]))
                  for t in m1.transitions}
        assert rivals == {
            "t1": [], "t_3": [],
            "t_x": ["t_y"],
            "t_y": ["t_x", "t_z"],
            "t_z": ["t_2", "t_y"],
            "t_2": ["t_z"],
        }

    def test_deterministic_model_has_no_rivals(self, m2):
        for t in m2.transitions.values():
            assert m2.rivals(t) == ()

    def test_perfect_rivals_identical_guards(self):
        doc = _tiny_doc()
        doc["transitions"].append({
            "id": "tb", "source": "a", "target": "a", "input": "go",
            "output": "alt", "params": [], "guard": "true", "update": ""})
        m = model_from_dict(doc)
        ta, tb = m.transitions["ta"], m.transitions["tb"]
        assert [r.id for r in m.perfect_rivals(ta)] == ["tb"]
        assert [r.id for r in m.perfect_rivals(tb)] == ["ta"]

    def test_perfect_rival_weaker_guard(self):
        doc = _tiny_doc()
        doc["variables"].append(
            {"name": "v", "kind": "state", "lower": 0, "upper": 9})
        doc["transitions"][0]["guard"] = "v > 3"
        doc["transitions"].append({
            "id": "tb", "source": "a", "target": "a", "input": "go",
            "output": "alt", "params": [], "guard": "true", "update": ""})
        m = model_from_dict(doc)
        ta, tb = m.transitions["ta"], m.transitions["tb"]
        assert [r.id for r in m.perfect_rivals(ta)] == ["tb"]  # weaker guard
        assert m.perfect_rivals(tb) == ()

    def test_random_models_perfect_rivals_match_bruteforce(self):
        rng = random.Random(61)
        from xrpt.constraints import evaluate, push_negations
        for _ in range(25):
            m = random_small_model(rng)
            envs = [
                {**{v: a for v, a in zip(sorted(m.state_vars), combo)}, "p": p}
                for combo in _product_upto(len(m.state_vars), 5)
                for p in range(6)
            ]
            for t in m.transitions.values():
                got = {r.id for r in m.perfect_rivals(t)}
                want = set()
                for o in m.rivals(t):
                    og = push_negations(o.guard)
                    if all(evaluate(og, e) for e in envs
                           if evaluate(push_negations(t.guard), e)):
                        want.add(o.id)
                assert got == want


def _product_upto(n, hi):
    import itertools
    return itertools.product(*(range(hi + 1) for _ in range(n)))


class TestExecution:
    def test_enabled_count_at_pumped_state(self, m1):
        s = EfsmState("l1", {"x": 10, "y": 0, "z": 0})
        inp = {ILABEL: m1.label_index("COUNT"), "i": 6}
        assert [t.id for t in m1.enabled(s, inp)] == ["t_z"]

    def test_enabled_wrong_label(self, m1):
        s = EfsmState("l1", {"x": 10, "y": 0, "z": 0})
        inp = {ILABEL: m1.label_index("START"), "i": 6}
        assert m1.enabled(s, inp) == []

    def test_enabled_pairs_have_distinct_outputs(self, m1):
        s = EfsmState("l1", {"x": 5, "y": 2, "z": 2})
        for i in range(26):
            inp = {ILABEL: m1.label_index("COUNT"), "i": i}
            outs = [t.output_label for t in m1.enabled(s, inp)]
            assert len(outs) == len(set(outs))

    def test_apply_start_transition(self, m1):
        s = EfsmState("l0", {"x": 0, "y": 0, "z": 0})
        inp = {ILABEL: m1.label_index("START"), "i": 10}
        nxt = m1.apply_transition(s, m1.transitions["t1"], inp)
        assert nxt == EfsmState("l1", {"x": 10, "y": 0, "z": 0})

    def test_apply_identity_update_changes_location_only(self, m1):
        s = EfsmState("l1", {"x": 10, "y": 6, "z": 2})
        inp = {ILABEL: m1.label_index("COUNT"), "i": 0}
        nxt = m1.apply_transition(s, m1.transitions["t_2"], inp)
        assert nxt.location == "l2" and nxt.alpha == s.alpha

    def test_pump_sequence_reaches_target_state(self, m1):
        # drive z and y up by hand until the constrained state is reached
        s = EfsmState("l1", {"x": 10, "y": 0, "z": 1})
        count = m1.label_index("COUNT")
        for tid, i in (("t_z", 6), ("t_y", 4), ("t_x", 0), ("t_z", 6),
                       ("t_y", 4), ("t_x", 0), ("t_z", 6), ("t_y", 4),
                       ("t_x", 0), ("t_z", 6), ("t_y", 4), ("t_x", 0),
                       ("t_z", 6), ("t_y", 4), ("t_x", 0), ("t_z", 6),
                       ("t_y", 4), ("t_x", 0), ("t_z", 6)):
            s = m1.apply_transition(s, m1.transitions[tid], {ILABEL: count, "i": i})
        assert s == EfsmState("l1", {"x": 10, "y": 6, "z": 2})

    def test_not_enabled_raises(self, m1):
        s = EfsmState("l0", {"x": 0, "y": 0, "z": 0})
        inp = {ILABEL: m1.label_index("COUNT"), "i": 0}
        with pytest.raises(NotEnabledError):
            m1.apply_transition(s, m1.transitions["t_x"], inp)

    def test_update_outside_domain_is_not_enabled(self, m1):
        # t_x decrements z; at z = 0 the update leaves the domain
        s = EfsmState("l1", {"x": 5, "y": 0, "z": 0})
        inp = {ILABEL: m1.label_index("COUNT"), "i": 0}
        assert "t_x" not in [t.id for t in m1.enabled(s, inp)]


class TestTraps:
    def test_unconditional_trap_covered_by_any_firing(self, m1):
        trap = m1.traps["trap_t3"]
        s = EfsmState("l2", {"x": 10, "y": 6, "z": 2})
        inp = {ILABEL: m1.label_index("RESET")}
        assert trap_covered_by(m1, s, m1.transitions["t_3"], inp, trap, {})

    def test_wrong_transition_does_not_cover(self, m1):
        trap = m1.traps["trap_t3"]
        s = EfsmState("l1", {"x": 10, "y": 6, "z": 2})
        inp = {ILABEL: m1.label_index("COUNT"), "i": 0}
        assert not trap_covered_by(m1, s, m1.transitions["t_2"], inp, trap, {})

    def test_dependent_trap_blocked_until_dependency_covered(self, m2):
        trap = m2.traps["goal1_tr2"]  # requires goal1_tr1 = 1
        s = EfsmState("lw", {"counter": 0, "number": 0})
        inp = {ILABEL: m2.label_index("CC"), "n": 0}
        t1 = m2.transitions["t1"]
        assert not trap_covered_by(m2, s, t1, inp, trap, {"goal1_tr1": 0})
        assert trap_covered_by(m2, s, t1, inp, trap, {"goal1_tr1": 1})

    def test_goal1_sequence_covers_in_order(self, m2):
        """Simulate the printed path for goal 1 and check trap bookkeeping."""
        goal = m2.goal("goal1")
        inputs = {
            "t0": ("ICONreq", {}), "t1": ("CC", {}), "t4": ("IDATreq", {}),
            "t7": ("Texpired", {}), "t6": ("AK", {"n": 1}),
            "t5": ("IDATend", {}),
        }
        s = m2.initial_state()
        vals = {v: 0 for v in m2.trap_vars}
        covered = []
        for step, tid in enumerate(["t0", "t1", "t4", "t7", "t6", "t4", "t5", "t4"]):
            label, params = inputs[tid]
            if tid == "t6":
                params = {"n": s.alpha["number"]}
            inp = {ILABEL: m2.label_index(label), **params}
            t = m2.transitions[tid]
            newly = [tr.var for tr in goal.traps
                     if vals[tr.var] == 0 and trap_covered_by(m2, s, t, inp, tr, vals)]
            for var in newly:
                vals[var] = 1
                covered.append(var)
            s = m2.apply_transition(s, t, inp)
        assert covered == [f"goal1_tr{k}" for k in range(1, 9)]

    def test_goal_dependency_order_validation(self, m2):
        goal = m2.goal("goal5")
        assert [t.var for t in goal.traps] == [f"goal5_tr{k}" for k in range(1, 9)]


class TestValidationAndSerialization:
    def test_roundtrip_semantically_identical(self, m1):
        doc = model_to_dict(m1)
        again = model_from_dict(doc)
        assert again.locations == m1.locations
        assert set(again.transitions) == set(m1.transitions)
        for tid, t in m1.transitions.items():
            assert render(again.transitions[tid].guard) == render(t.guard)
            assert {k: render_a(v) for k, v in again.transitions[tid].update.items()} \
                == {k: render_a(v) for k, v in t.update.items()}

    def test_rejects_shared_output_among_rivals(self):
        doc = _tiny_doc()
        doc["transitions"].append({
            "id": "tb", "source": "a", "target": "a", "input": "go",
            "output": "done", "params": [], "guard": "true", "update": ""})
        with pytest.raises(ModelError, match="output-observable"):
            model_from_dict(doc)

    def test_rejects_disconnected_graph(self):
        doc = _tiny_doc()
        doc["locations"].append("island")
        with pytest.raises(ModelError, match="connected"):
            model_from_dict(doc)

    def test_rejects_guard_on_foreign_input(self):
        doc = _tiny_doc()
        doc["variables"].append(
            {"name": "k", "kind": "input", "lower": 0, "upper": 3})
        doc["transitions"][0]["guard"] = "k >= 1"  # k is not a param of 'go'
        with pytest.raises(ModelError, match="guard"):
            model_from_dict(doc)

    def test_rejects_trap_wide_domain(self):
        with pytest.raises(ModelError, match="trap"):
            VarDecl("tr", VarKind.TRAP, 0, 2)

    def test_rejects_inconsistent_label_params(self):
        doc = _tiny_doc()
        doc["variables"].append(
            {"name": "k", "kind": "input", "lower": 0, "upper": 3})
        doc["transitions"].append({
            "id": "tb", "source": "a", "target": "a", "input": "go",
            "output": "alt", "params": ["k"], "guard": "true", "update": ""})
        with pytest.raises(ModelError, match="parameter"):
            model_from_dict(doc)

    def test_bundled_models_validate(self, m1, m2):
        assert m1.name == "m1_counter" and m2.name == "m2_inres"


def render_a(e):
    from xrpt.constraints import render_arith
    return render_arith(e)


def _tiny_doc():
    return {
        "name": "tiny",
        "locations": ["a"],
        "initial": "a",
        "variables": [],
        "input_labels": ["go"],
        "output_labels": ["done", "alt"],
        "transitions": [{
            "id": "ta", "source": "a", "target": "a", "input": "go",
            "output": "done", "params": [], "guard": "true", "update": "",
        }],
        "traps": [],
        "goals": {},
    }
