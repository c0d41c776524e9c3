from collections import Counter

from domains import blocks_clear_problem
from pddl_io import parse_problem
from strips_model import Transition, apply, ground, is_goal, successors


def test_blocks_grounding_prunes_equal_bindings(blocks_domain):
    instance = parse_problem(blocks_clear_problem(3), blocks_domain)
    counts = Counter(action.schema for action in ground(instance))
    assert counts == {"pickup": 3, "putdown": 3, "stack": 6, "unstack": 6}


def test_gripper_grounding_contains_expected_actions(gripper):
    names = {action.name for action in ground(gripper(1))}
    assert "(pick b1 rooma left)" in names
    assert "(move rooma roomb)" in names
    assert "(drop b1 roomb left)" in names
    assert "(move rooma rooma)" not in names


def test_gripper_initial_successors(gripper):
    instance = gripper(1)
    state = instance.initial_state()
    names = {action.name for action, _ in successors(state, ground(instance))}
    assert names == {"(pick b1 rooma left)", "(pick b1 rooma right)", "(move rooma roomb)"}


def test_tower_has_single_successor(tower):
    state = tower.initial_state()
    result = successors(state, ground(tower))
    assert [action.name for action, _ in result] == ["(unstack b3 b2)"]


def test_delete_then_add_keeps_goal_atoms(gripper):
    instance = gripper(1)
    actions = {action.name: action for action in ground(instance)}
    state = apply(instance.initial_state(), actions["(pick b1 rooma left)"])
    assert ("carry", "b1", "left") in state.atoms
    assert ("at", "b1", "rooma") not in state.atoms
    assert ("at_g", "b1", "roomb") in state.atoms
    assert ("at_g", "b1", "roomb") not in state.fluent_atoms()


def test_goal_check(gripper):
    instance = gripper(2)
    done = instance.make_state([("at-robby", "roomb"), ("at", "b1", "roomb"), ("at", "b2", "roomb"),
                                ("free", "left"), ("free", "right")])
    assert done.is_goal
    assert is_goal(done, instance)
    assert not instance.initial_state().is_goal


def test_changed_atoms(gripper):
    instance = gripper(1)
    actions = {action.name: action for action in ground(instance)}
    source = instance.initial_state()
    target = apply(source, actions["(move rooma roomb)"])
    added, deleted = Transition(source, target).changed_atoms
    assert added == {("at-robby", "roomb")}
    assert deleted == {("at-robby", "rooma")}
