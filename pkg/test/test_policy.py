import graphlib
import json

import numpy as np
import pytest

from domains import blocks_clear_problem
from features import Exists, Feature, FeatureKind, Nominal, PrimitiveConcept, PrimitiveRole
from pddl_io import parse_problem
from planner import Planner, StateClass
from policy import (
    ConditionAtom, ConditionTest, EffectAtom, EffectKind, Policy, Rule, TransitionSignature, VerdictKind,
    analyze, analyze_many, compatible, effective_width, format_policy, format_rule, load_policy,
    policy_contains, policy_from_json, policy_to_json, project, rule_from_values, save_policy,
)
from strips_model import Transition
from termination import RankEntry, stratify

N, M = 0, 1


def sig(boolean=(), **values):
    return TransitionSignature({int(k[1:]): v for k, v in values.items()}, frozenset(boolean))


def test_rule_atoms_are_sorted_and_unique():
    rule = Rule((ConditionAtom(2, ConditionTest.BOOL_TRUE), ConditionAtom(0, ConditionTest.GT0)),
                (EffectAtom(2, EffectKind.SET_FALSE),))
    assert [c.feature for c in rule.conditions] == [0, 2]
    assert rule.condition(0) == ConditionTest.GT0
    assert rule.effect(0) is None
    assert rule.features == {0, 2}
    with pytest.raises(ValueError):
        Rule((ConditionAtom(0, ConditionTest.GT0), ConditionAtom(0, ConditionTest.EQ0)))
    with pytest.raises(ValueError):
        Rule((), (EffectAtom(1, EffectKind.INC), EffectAtom(1, EffectKind.DEC)))


def test_compatibility_semantics():
    rule = Rule((ConditionAtom(N, ConditionTest.GT0),), (EffectAtom(N, EffectKind.DEC), EffectAtom(M, EffectKind.UNK_NUM)))
    assert compatible(rule, sig(f0=(3, 2), f1=(0, 1)))
    assert compatible(rule, sig(f0=(3, 1), f1=(0, 0)))
    assert not compatible(rule, sig(f0=(0, 0), f1=(0, 1)))
    assert not compatible(rule, sig(f0=(3, 3), f1=(0, 1)))
    # 规则未提及的数值特征必须保持精确值
    assert not compatible(rule, sig(f0=(3, 2), f1=(0, 1), f2=(4, 5)))
    # 未提及的布尔特征只需保持真值
    assert compatible(rule, sig(boolean={2}, f0=(3, 2), f1=(0, 1), f2=(4, 5)))
    assert not compatible(rule, sig(boolean={2}, f0=(3, 2), f1=(0, 1), f2=(1, 0)))


def test_boolean_effects():
    set_true = Rule((), (EffectAtom(0, EffectKind.SET_TRUE),))
    assert compatible(set_true, sig(boolean={0}, f0=(1, 1)))
    assert not compatible(set_true, sig(boolean={0}, f0=(1, 0)))
    unknown = Rule((), (EffectAtom(0, EffectKind.UNK_BOOL),))
    assert compatible(unknown, sig(boolean={0}, f0=(1, 0)))
    assert compatible(unknown, sig(boolean={0}, f0=(0, 0)))


def test_rule_from_values_and_projection(tower, blocks_features, blocks_rules):
    rule = rule_from_values([0, 1], [2, 0], [1, 1], [False, True])
    assert rule == blocks_rules["pick"]

    plan = Planner(tower).solve()
    assert project(plan.transitions[0], [1, 0], blocks_features) == blocks_rules["pick"]
    with pytest.raises(ValueError):
        project(plan.transitions[0], [], blocks_features)


def test_policy_requires_defined_features(gripper_features, gripper_rules):
    with pytest.raises(ValueError):
        Policy.from_pool(gripper_rules, gripper_features, [0, 1])


def test_policy_contains(gripper_policy, gripper, step):
    instance = gripper(3)
    planner = Planner(instance)
    s0 = planner.initial_state
    s1 = step(planner, s0, "(pick b1 rooma left)")
    assert gripper_policy.contains(s0, s1)
    assert policy_contains(gripper_policy, Transition(s0, s1))
    # 在 A 房间放回球使 n 增加
    back = step(planner, s1, "(drop b1 rooma left)")
    assert not gripper_policy.contains(s1, back)
    # 空手离开 A 房间
    assert not gripper_policy.contains(s0, step(planner, s0, "(move rooma roomb)"))
    assert not Policy([], {}).contains(s0, s1)


@pytest.mark.parametrize("balls", [2, 3, 4])
def test_gripper_policy_solves(gripper_policy, gripper, balls):
    verdict = analyze(gripper_policy, Planner(gripper(balls)))
    assert verdict.kind == VerdictKind.SOLVES
    assert verdict.solves
    assert verdict.visited > 0


def test_partial_policy_is_not_closed(gripper_features, gripper_rules, gripper):
    policy = Policy.from_pool(gripper_rules[:1], gripper_features, [0, 1, 2])
    verdict = analyze(policy, Planner(gripper(2)))
    assert verdict.kind == VerdictKind.NOT_CLOSED
    assert not any(atom[0] == "free" for atom in verdict.state.atoms)
    assert verdict.trajectory[0] == Planner(gripper(2)).initial_state
    assert verdict.trajectory[-1] == verdict.state


def test_walking_past_spanner_is_unsafe(spanner_features, spanner):
    walk = Rule((), (EffectAtom(0, EffectKind.DEC),))
    policy = Policy.from_pool([walk], spanner_features, [0])
    verdict = analyze(policy, Planner(spanner(2)))
    assert verdict.kind == VerdictKind.UNSAFE
    assert ("at-man", "l2") in verdict.state.atoms
    assert ("at-man", "l1") in verdict.transition.source.atoms
    assert verdict.trajectory[-1] == verdict.state


# l2 与 l3 之间可以来回走，扳手在 l1
SPANNER_LOOP = """\
(define (problem spanner-loop) (:domain spanner)
  (:objects l0 l1 l2 l3 - location s1 - spanner n1 - nut)
  (:init (link l0 l1) (link l1 l2) (link l2 l3) (link l3 l2) (at-man l0)
         (spanner-at s1 l1) (useable s1) (nut-at n1 l3) (loose n1))
  (:goal (tightened n1)))
"""


def test_walking_in_circles_past_spanner_is_unsafe(spanner_domain):
    # 指向人所在位置的位置数，每一步行走都会改变
    inbound = Feature(0, FeatureKind.NUMERICAL, Exists(PrimitiveRole("link"), PrimitiveConcept("at-man", 0)))
    walk = Policy([Rule((), (EffectAtom(0, EffectKind.INC),)), Rule((), (EffectAtom(0, EffectKind.DEC),))],
                  {0: inbound})
    planner = Planner(parse_problem(SPANNER_LOOP, spanner_domain))

    verdict = analyze(walk, planner)
    assert verdict.kind == VerdictKind.UNSAFE
    assert ("at-man", "l2") in verdict.state.atoms
    assert ("at-man", "l1") in verdict.transition.source.atoms
    assert verdict.transition.target == verdict.state
    assert [s for s in verdict.trajectory if ("at-man", "l0") in s.atoms] == [planner.initial_state]

    # 不判死端时同一条路径在 l2、l3 之间成环
    blind = analyze(walk, planner, classify=lambda s: StateClass.ALIVE)
    assert blind.kind == VerdictKind.CYCLIC
    assert ("at-man", "l2") in blind.state.atoms


def test_blocks_policies_on_tower(blocks_features, blocks_rules, tower):
    planner = Planner(tower)
    good = Policy.from_pool([blocks_rules["pick"], blocks_rules["put"]], blocks_features, [0, 1])
    assert analyze(good, planner).kind == VerdictKind.SOLVES

    loose = Policy.from_pool([blocks_rules["pick"], blocks_rules["put_anywhere"]], blocks_features, [0, 1])
    verdict = analyze(loose, planner)
    assert verdict.kind == VerdictKind.CYCLIC
    # 把 b3 放回 b2 上回到初始状态
    assert verdict.state == planner.initial_state
    assert verdict.trajectory[0] == verdict.trajectory[-1]


def test_analyze_many_keeps_order(gripper_policy, gripper, gripper_features, gripper_rules):
    planners = [Planner(gripper(n)) for n in (2, 3, 4)]
    verdicts = analyze_many(gripper_policy, planners, jobs=3)
    assert [v.kind for v in verdicts] == [VerdictKind.SOLVES] * 3

    partial = Policy.from_pool(gripper_rules[:1], gripper_features, [0, 1, 2])
    assert [v.kind for v in analyze_many(partial, planners, jobs=1)] == [VerdictKind.NOT_CLOSED] * 3


def test_format_policy(gripper_policy, gripper_rules):
    names = gripper_policy.local_names()
    assert format_rule(gripper_rules[0], names) == "{f0>0} ↦ {f0↓, f1?}"
    assert format_rule(gripper_rules[2], names) == "{f1>0, f2} ↦ {¬f2}"
    text = format_policy(gripper_policy)
    assert text.startswith("Features:\n")
    assert "  r4: {f1=0, ¬f2} ↦ {f2}" in text
    assert "(exists (role at) (nominal rooma))" in text


def test_policy_json_file(tmp_path, gripper_policy, gripper_rules):
    ranked = Policy(gripper_policy.rules, gripper_policy.features, stratify(gripper_rules))
    path = tmp_path / "policy.json"
    save_policy(ranked, path)

    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["rules"][0] == {"cond": ["f0>0"], "eff": ["f0↓", "f1?"]}
    assert data["ranking"]["f2"] == {"rank": 2, "support": ["f1"]}

    loaded = load_policy(path)
    assert loaded.rules == ranked.rules
    assert [f.concept for f in loaded.features.values()] == [f.concept for f in ranked.features.values()]
    assert loaded.ranking[1] == RankEntry(1, (0,))
    assert "rank 1 via f0" in format_policy(loaded)


@pytest.mark.parametrize("token", ["f0", "f9>0", "f2>0", "¬f0", "f0!"])
def test_policy_json_rejects_bad_tokens(gripper_policy, token):
    data = policy_to_json(gripper_policy)
    data["rules"][0]["cond"] = [token]
    with pytest.raises(ValueError):
        policy_from_json(data)


def test_gripper_policy_has_width_zero(gripper_policy, gripper):
    result = effective_width(gripper_policy, Planner(gripper(3)))
    assert result.solved
    assert result.max_width == 0
    assert result.avg_width == 0.0


def test_coarse_policy_needs_search(gripper):
    delivered = Feature(0, FeatureKind.NUMERICAL, Exists(PrimitiveRole("at"), Nominal("roomb")))
    policy = Policy([Rule((), (EffectAtom(0, EffectKind.INC),))], {0: delivered})
    result = effective_width(policy, Planner(gripper(1)))
    assert result.solved
    assert result.max_width >= 1
    assert result.length == 1

    # 只允许 IW(0) 时找不到相容后继
    assert not effective_width(policy, Planner(gripper(1)), k_max=0).solved


# ---- 与全状态空间模型检查对照 ----

WIDER = {EffectKind.INC: EffectKind.UNK_NUM, EffectKind.DEC: EffectKind.UNK_NUM,
         EffectKind.SET_TRUE: EffectKind.UNK_BOOL, EffectKind.SET_FALSE: EffectKind.UNK_BOOL}


def pi_graph(policy, planner):
    """π-可达图，目标状态不再展开"""
    graph = {}
    stack = [planner.initial_state]
    while stack:
        state = stack.pop()
        if state in graph:
            continue
        graph[state] = [] if state.is_goal else policy.successors(planner, state)
        stack.extend(t for t in graph[state] if t not in graph)
    return graph


def model_check(policy, planner, alive):
    graph = pi_graph(policy, planner)
    violations = set()
    for state, succs in graph.items():
        if state.is_goal:
            continue
        if state not in alive:
            violations.add(VerdictKind.UNSAFE)
        elif not succs:
            violations.add(VerdictKind.NOT_CLOSED)
    try:
        graphlib.TopologicalSorter(graph).prepare()
    except graphlib.CycleError:
        violations.add(VerdictKind.CYCLIC)
    return graph, violations


def random_policy(rng, pool, edges):
    G = sorted(int(g) for g in rng.choice(len(pool), size=int(rng.integers(1, len(pool) + 1)), replace=False))
    sources = [s for s, succs in edges.items() if succs]
    rules = []
    for _ in range(int(rng.integers(1, 6))):
        source = sources[int(rng.integers(len(sources)))]
        target = edges[source][int(rng.integers(len(edges[source])))]
        rule = project(Transition(source, target), G, pool)
        if rule.conditions and rng.random() < 0.4:
            dropped = rule.conditions[int(rng.integers(len(rule.conditions)))]
            rule = rule.replace(conditions=[c for c in rule.conditions if c is not dropped])
        if rng.random() < 0.3:
            rule = rule.replace(effects=[EffectAtom(e.feature, WIDER.get(e.effect, e.effect)) for e in rule.effects])
        rules.append(rule)
    return Policy.from_pool(rules, pool, G)


@pytest.fixture
def small_cases(gripper, spanner, tower, blocks_domain, spanner_domain,
                gripper_features, blocks_features, spanner_features):
    cases = [(gripper(n), gripper_features) for n in (1, 2, 3)]
    cases += [(tower, blocks_features)]
    cases += [(parse_problem(blocks_clear_problem(4, seed=seed), blocks_domain), blocks_features) for seed in (1, 2)]
    cases += [(spanner(n), spanner_features) for n in (2, 3, 5)]
    cases += [(parse_problem(SPANNER_LOOP, spanner_domain), spanner_features)]
    return cases


def test_analyze_agrees_with_model_check(small_cases, explore, alive_states,
                                         gripper_policy, gripper_features, gripper_rules,
                                         blocks_features, blocks_rules, spanner_features):
    rng = np.random.default_rng(5)
    seen = set()

    def check(policy, planner, alive):
        verdict = analyze(policy, planner)
        graph, violations = model_check(policy, planner, alive)
        assert len(graph) <= 10 ** 4
        seen.add(verdict.kind)
        if not violations:
            assert verdict.kind == VerdictKind.SOLVES
            return
        assert verdict.kind in violations
        assert verdict.trajectory[0] == planner.initial_state
        for source, target in zip(verdict.trajectory, verdict.trajectory[1:]):
            assert target in graph[source]
        if verdict.kind == VerdictKind.UNSAFE:
            assert verdict.state not in alive and not verdict.state.is_goal
            if verdict.transition is not None:
                assert verdict.transition.source in alive
                assert verdict.transition.target == verdict.state
        elif verdict.kind == VerdictKind.NOT_CLOSED:
            assert verdict.state in alive and graph[verdict.state] == []
        else:
            assert verdict.trajectory[-1] == verdict.state
            assert verdict.state in verdict.trajectory[:-1]

    for instance, pool in small_cases:
        planner = Planner(instance)
        _, edges = explore(planner)
        assert len(edges) <= 10 ** 4
        alive = alive_states(edges)
        for _ in range(40):
            check(random_policy(rng, pool, edges), Planner(instance), alive)
        if instance.name.startswith("gripper"):
            check(gripper_policy, planner, alive)
            check(Policy.from_pool(gripper_rules[:1], gripper_features, [0, 1, 2]), Planner(instance), alive)
        if instance.name.startswith("tower"):
            check(Policy.from_pool([blocks_rules["pick"], blocks_rules["put_anywhere"]], blocks_features, [0, 1]),
                  planner, alive)
        if instance.name.startswith("spanner"):
            walk = Rule((), (EffectAtom(0, EffectKind.DEC),))
            check(Policy.from_pool([walk], spanner_features, [0]), planner, alive)
    assert seen == set(VerdictKind)
