import dataclasses
import random

import pytest
from hypothesis import given, settings, strategies as st

from policyevo.lang import parse, pretty_print
from policyevo.lang.nodes import If, Num, Return, count_nodes, iter_exprs
from policyevo.llm import MockBackend, Operator, RecordingBackend, ScriptedBackend, extract, mock_evolve
from policyevo.llm.mock import MAX_NODES, graft, param_mutate, starter, struct_mutate
from policyevo.llm.prompts import render

SIMPLE = "if y > 0.6: return 2 end\nif vy < -0.5: return 2 end\nreturn 0\n"


def literals(prog):
    return [e for e in iter_exprs(prog) if isinstance(e, Num)]


def test_param_mutate_changes_exactly_one_literal():
    prog = parse(SIMPLE)
    for seed in range(50):
        child = param_mutate(prog, random.Random(seed))
        before, after = literals(prog), literals(child)
        assert len(before) == len(after)
        changed = [(a, b) for a, b in zip(before, after) if a != b]
        assert len(changed) == 1
        old, new = changed[0][0].value, changed[0][1].value
        assert 0.8 - 1e-3 <= new / old <= 1.25 + 1e-3


def test_param_mutate_leaves_actions_alone():
    prog = parse(SIMPLE)
    for seed in range(50):
        child = param_mutate(prog, random.Random(seed))
        returns = [s for s in child.body if isinstance(s, Return)]
        assert returns == [Return(Num(0.0, True))]
        for s in child.body:
            if isinstance(s, If):
                assert s.arms[0][1] == (Return(Num(2.0, True)),)


def test_param_mutate_without_tunable_literal_is_identity():
    prog = parse("return 0")
    assert param_mutate(prog, random.Random(1)) is prog


def test_struct_mutate_swaps_or_duplicates(reference_program):
    seen = set()
    for seed in range(60):
        child = struct_mutate(reference_program, random.Random(seed))
        assert child != reference_program
        seen.add(count_nodes(child) == count_nodes(reference_program))
    assert seen == {True, False}


def test_graft_inserts_a_top_level_branch():
    a = parse("if x > 0.1: return 3 end\nreturn 0")
    b = parse("if vy < -1.0: return 2 end\nreturn 1")
    child = graft(a, b, random.Random(0))
    assert sum(isinstance(s, If) for s in child.body) == 2
    assert child.body[-1] == a.body[-1]


def test_graft_refuses_out_of_scope_names():
    a = parse("return 0")
    b = parse("let t = y\nif t > 1: return 1 end\nreturn 0")
    assert graft(a, b, random.Random(0)) is None


def test_starters_are_valid_and_varied():
    texts = {pretty_print(starter(s)) for s in range(30)}
    assert len(texts) == 30
    for t in texts:
        parse(t)


@pytest.mark.parametrize("op", list(Operator))
def test_mock_evolve_is_deterministic(op, reference_source):
    parents = [(reference_source, 10.0), (SIMPLE, -50.0)]
    assert mock_evolve(parents, op, 42) == mock_evolve(parents, op, 42)


def test_thousand_offspring_from_reference_all_parse(reference_source):
    ops = list(Operator)
    for seed in range(1000):
        parse(mock_evolve([(reference_source, 100.0)], ops[seed % len(ops)], seed))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**63), st.sampled_from(list(Operator)), st.integers(0, 2**32))
def test_closure_under_edits(seed, op, parent_seed):
    parent = pretty_print(starter(parent_seed))
    out = mock_evolve([(parent, 1.0), (SIMPLE, 0.0)], op, seed)
    prog = parse(out)
    assert count_nodes(prog) <= MAX_NODES
    assert pretty_print(prog) == out


def test_repeated_evolution_stays_bounded(reference_source):
    src = reference_source
    for seed in range(200):
        src = mock_evolve([(src, 1.0), (src, 0.0)], Operator.EOH_STRUCT_MUTATE, seed)
    assert count_nodes(parse(src)) <= MAX_NODES


def test_backend_wraps_code_and_rationale(reference_source):
    backend = MockBackend()
    req = render(Operator.EVOENGINEER_REFINE, {k: "" for k in
                 ("task_description", "domain_hints", "parent", "episodes", "fitness_summary",
                  "failure_stats", "best_so_far")})
    req = dataclasses.replace(req, parents=((reference_source, 1.0),), seed=3)
    resp = backend.complete(req)
    assert resp.extracted_code is not None and resp.extracted_rationale
    assert backend.calls == 1


def test_garbage_rate_produces_unusable_replies():
    backend = MockBackend(garbage_rate=1.0)
    base = render(Operator.INIT, {"task_description": ""})
    for seed in range(20):
        resp = backend.complete(dataclasses.replace(base, seed=seed))
        code = resp.extracted_code
        if code is not None:
            with pytest.raises(Exception):
                parse(code)


def test_recording_and_scripted_backends():
    rec = RecordingBackend(ScriptedBackend(["a", "```\nreturn 1\n```"]))
    req = render(Operator.INIT, {"task_description": ""})
    rec.complete(req)
    second = rec.complete(req)
    assert rec.calls == 2 and rec.template_ids() == [Operator.INIT, Operator.INIT]
    assert second.extracted_code == "return 1\n"
    assert extract(rec.responses[0].raw_text).code is None
