from collections import deque

import pytest

from domains import BLOCKS_DOMAIN, GRIPPER_DOMAIN, SPANNER_DOMAIN, gripper_problem, spanner_problem
from features import (
    And, Exists, Feature, FeatureKind, FeaturePool, GoalPrimitiveConcept, InverseRole, Nominal,
    PrimitiveConcept, PrimitiveRole, Top, TransitiveClosure,
)
from pddl_io import parse_domain, parse_problem
from planner import Planner
from policy import ConditionAtom, ConditionTest, EffectAtom, EffectKind, Policy, Rule

# b3 叠在 b2 上，b2 叠在 b1 上，目标是清空 b1
BLOCKS_TOWER = """\
(define (problem tower-3)
  (:domain blocks)
  (:objects b1 b2 b3 - block)
  (:init (ontable b1) (on b2 b1) (on b3 b2) (clear b3) (handempty))
  (:goal (clear b1)))
"""

C = ConditionTest
E = EffectKind


def cond(feature, test):
    return ConditionAtom(feature, test)


def eff(feature, effect):
    return EffectAtom(feature, effect)


@pytest.fixture(scope="session")
def gripper_domain():
    return parse_domain(GRIPPER_DOMAIN, "gripper.pddl")


@pytest.fixture(scope="session")
def blocks_domain():
    return parse_domain(BLOCKS_DOMAIN, "blocks.pddl")


@pytest.fixture(scope="session")
def spanner_domain():
    return parse_domain(SPANNER_DOMAIN, "spanner.pddl")


@pytest.fixture
def gripper(gripper_domain):
    """按球数构造 Gripper 实例"""
    return lambda balls: parse_problem(gripper_problem(balls), gripper_domain)


@pytest.fixture
def spanner(spanner_domain):
    return lambda length: parse_problem(spanner_problem(length), spanner_domain)


@pytest.fixture
def tower(blocks_domain):
    return parse_problem(BLOCKS_TOWER, blocks_domain)


@pytest.fixture(scope="session")
def gripper_features():
    """n: A 房间里的球数；m: 夹着的球数；A: 机器人是否在 A 房间；junk: 常量"""
    n = Feature(0, FeatureKind.NUMERICAL, Exists(PrimitiveRole("at"), Nominal("rooma")))
    m = Feature(1, FeatureKind.NUMERICAL, PrimitiveConcept("carry", 0))
    a = Feature(2, FeatureKind.BOOLEAN, And(PrimitiveConcept("at-robby", 0), Nominal("rooma")))
    junk = Feature(3, FeatureKind.NUMERICAL, Top())
    return FeaturePool((n, m, a, junk), 3, 2)


@pytest.fixture(scope="session")
def gripper_rules():
    n, m, a = 0, 1, 2
    return [
        Rule((cond(n, C.GT0),), (eff(n, E.DEC), eff(m, E.UNK_NUM))),
        Rule((cond(m, C.GT0),), (eff(m, E.DEC),)),
        Rule((cond(a, C.BOOL_TRUE), cond(m, C.GT0)), (eff(a, E.SET_FALSE),)),
        Rule((cond(a, C.BOOL_FALSE), cond(m, C.EQ0)), (eff(a, E.SET_TRUE),)),
    ]


@pytest.fixture
def gripper_policy(gripper_features, gripper_rules):
    return Policy.from_pool(gripper_rules, gripper_features, [0, 1, 2])


@pytest.fixture(scope="session")
def blocks_features():
    """n: 目标积木上方的积木数；H: 是否拿着积木"""
    n = Feature(0, FeatureKind.NUMERICAL,
                Exists(TransitiveClosure(PrimitiveRole("on")), GoalPrimitiveConcept("clear", 0)))
    h = Feature(1, FeatureKind.BOOLEAN, PrimitiveConcept("holding", 0))
    return FeaturePool((n, h), 4, 2)


@pytest.fixture(scope="session")
def blocks_rules():
    n, h = 0, 1
    pick = Rule((cond(h, C.BOOL_FALSE), cond(n, C.GT0)), (eff(h, E.SET_TRUE), eff(n, E.DEC)))
    put = Rule((cond(h, C.BOOL_TRUE),), (eff(h, E.SET_FALSE),))
    put_anywhere = Rule((cond(h, C.BOOL_TRUE),), (eff(h, E.SET_FALSE), eff(n, E.UNK_NUM)))
    return {"pick": pick, "put": put, "put_anywhere": put_anywhere}


@pytest.fixture(scope="session")
def spanner_features():
    """d: 前方位置数；c: 是否拿着扳手；l: 松动螺母；s: 脚下是否有扳手"""
    d = Feature(0, FeatureKind.NUMERICAL, Exists(InverseRole(TransitiveClosure(PrimitiveRole("link"))),
                                                 PrimitiveConcept("at-man", 0)))
    c = Feature(1, FeatureKind.BOOLEAN, PrimitiveConcept("carrying", 0))
    loose = Feature(2, FeatureKind.BOOLEAN, PrimitiveConcept("loose", 0))
    s = Feature(3, FeatureKind.BOOLEAN, Exists(PrimitiveRole("spanner-at"), PrimitiveConcept("at-man", 0)))
    return FeaturePool((d, c, loose, s), 5, 3)


@pytest.fixture
def step():
    """按动作名取后继状态"""

    def apply_named(planner: Planner, state, action_name: str):
        for action, succ in planner.successors(state):
            if action.name == action_name:
                return succ
        raise AssertionError(f"{action_name} 不可应用")

    return apply_named


def _explore(planner: Planner):
    """全展开：可达状态的BFS深度与后继表"""
    depth = {planner.initial_state: 0}
    edges = {}
    queue = deque([planner.initial_state])
    while queue:
        state = queue.popleft()
        edges[state] = [succ for _, succ in planner.successors(state)]
        for succ in edges[state]:
            if succ not in depth:
                depth[succ] = depth[state] + 1
                queue.append(succ)
    return depth, edges


def _alive_states(edges):
    """能到达目标的状态（反向BFS）"""
    parents = {}
    for state, succs in edges.items():
        for succ in succs:
            parents.setdefault(succ, []).append(state)
    alive = {s for s in edges if s.is_goal}
    queue = deque(alive)
    while queue:
        state = queue.popleft()
        for parent in parents.get(state, []):
            if parent not in alive:
                alive.add(parent)
                queue.append(parent)
    return alive


@pytest.fixture
def explore():
    return _explore


@pytest.fixture
def alive_states():
    return _alive_states
