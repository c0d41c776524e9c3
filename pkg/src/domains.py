"""
基准领域生成器
生成 Gripper、Blocks4ops-clear、Delivery 和单螺母 Spanner 的 PDDL 领域与问题文本
"""

import random
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

from logger import get_logger

logger = get_logger()


GRIPPER_DOMAIN = """\
(define (domain gripper)
  (:requirements :strips :typing :constants :equality :negative-preconditions)
  (:types room ball gripper)
  (:constants rooma roomb - room)
  (:predicates (at-robby ?r - room) (at ?b - ball ?r - room)
               (free ?g - gripper) (carry ?b - ball ?g - gripper))
  (:action move
    :parameters (?from ?to - room)
    :precondition (and (at-robby ?from) (not (= ?from ?to)))
    :effect (and (at-robby ?to) (not (at-robby ?from))))
  (:action pick
    :parameters (?b - ball ?r - room ?g - gripper)
    :precondition (and (at ?b ?r) (at-robby ?r) (free ?g))
    :effect (and (carry ?b ?g) (not (at ?b ?r)) (not (free ?g))))
  (:action drop
    :parameters (?b - ball ?r - room ?g - gripper)
    :precondition (and (carry ?b ?g) (at-robby ?r))
    :effect (and (at ?b ?r) (free ?g) (not (carry ?b ?g)))))
"""

BLOCKS_DOMAIN = """\
(define (domain blocks)
  (:requirements :strips :typing :equality :negative-preconditions)
  (:types block)
  (:predicates (on ?x ?y - block) (ontable ?x - block) (clear ?x - block)
               (holding ?x - block) (handempty))
  (:action pickup
    :parameters (?x - block)
    :precondition (and (clear ?x) (ontable ?x) (handempty))
    :effect (and (holding ?x) (not (clear ?x)) (not (ontable ?x)) (not (handempty))))
  (:action putdown
    :parameters (?x - block)
    :precondition (holding ?x)
    :effect (and (ontable ?x) (clear ?x) (handempty) (not (holding ?x))))
  (:action stack
    :parameters (?x ?y - block)
    :precondition (and (holding ?x) (clear ?y) (not (= ?x ?y)))
    :effect (and (on ?x ?y) (clear ?x) (handempty) (not (holding ?x)) (not (clear ?y))))
  (:action unstack
    :parameters (?x ?y - block)
    :precondition (and (on ?x ?y) (clear ?x) (handempty) (not (= ?x ?y)))
    :effect (and (holding ?x) (clear ?y) (not (on ?x ?y)) (not (clear ?x)) (not (handempty)))))
"""

DELIVERY_DOMAIN = """\
(define (domain delivery)
  (:requirements :strips :typing)
  (:types cell package)
  (:predicates (adjacent ?a ?b - cell) (at-agent ?c - cell) (package-at ?p - package ?c - cell)
               (carrying ?p - package) (empty))
  (:action move
    :parameters (?from ?to - cell)
    :precondition (and (at-agent ?from) (adjacent ?from ?to))
    :effect (and (at-agent ?to) (not (at-agent ?from))))
  (:action pick-package
    :parameters (?p - package ?c - cell)
    :precondition (and (at-agent ?c) (package-at ?p ?c) (empty))
    :effect (and (carrying ?p) (not (package-at ?p ?c)) (not (empty))))
  (:action drop-package
    :parameters (?p - package ?c - cell)
    :precondition (and (at-agent ?c) (carrying ?p))
    :effect (and (package-at ?p ?c) (empty) (not (carrying ?p)))))
"""

SPANNER_DOMAIN = """\
(define (domain spanner)
  (:requirements :strips :typing)
  (:types location spanner nut)
  (:predicates (at-man ?l - location) (spanner-at ?s - spanner ?l - location)
               (nut-at ?n - nut ?l - location) (link ?a ?b - location)
               (carrying ?s - spanner) (useable ?s - spanner)
               (loose ?n - nut) (tightened ?n - nut))
  (:action walk
    :parameters (?a ?b - location)
    :precondition (and (at-man ?a) (link ?a ?b))
    :effect (and (at-man ?b) (not (at-man ?a))))
  (:action pickup-spanner
    :parameters (?l - location ?s - spanner)
    :precondition (and (at-man ?l) (spanner-at ?s ?l))
    :effect (and (carrying ?s) (not (spanner-at ?s ?l))))
  (:action tighten-nut
    :parameters (?l - location ?s - spanner ?n - nut)
    :precondition (and (at-man ?l) (nut-at ?n ?l) (carrying ?s) (useable ?s) (loose ?n))
    :effect (and (tightened ?n) (not (loose ?n)) (not (useable ?s)))))
"""


def _problem(name: str, domain: str, objects: Sequence[str], init: Sequence[str], goal: Sequence[str]) -> str:
    lines = [f"(define (problem {name})", f"  (:domain {domain})"]
    if objects:
        lines.append(f"  (:objects {' '.join(objects)})")
    lines.append("  (:init")
    lines.extend(f"    {atom}" for atom in init)
    lines.append("  )")
    lines.append(f"  (:goal (and {' '.join(goal)}))")
    lines.append(")")
    return "\n".join(lines) + "\n"


def gripper_problem(balls: int, name: Optional[str] = None) -> str:
    """所有球从 rooma 搬到 roomb，机器人有左右两个夹手"""
    if balls < 1:
        raise ValueError("至少需要一个球")
    ball_names = [f"b{i}" for i in range(1, balls + 1)]
    init = ["(at-robby rooma)", "(free left)", "(free right)"]
    init += [f"(at {b} rooma)" for b in ball_names]
    return _problem(name or f"gripper-{balls}", "gripper",
                    [" ".join(ball_names) + " - ball", "left right - gripper"],
                    init, [f"(at {b} roomb)" for b in ball_names])


def blocks_clear_problem(blocks: int, seed: Optional[int] = None, name: Optional[str] = None) -> str:
    """
    随机塔堆，目标是清空一个被压住的积木

    seed 缺省时取 blocks，使同样的参数得到同样的实例。
    """
    if blocks < 2:
        raise ValueError("至少需要两个积木")
    rng = random.Random(blocks if seed is None else seed)
    names = [f"b{i}" for i in range(1, blocks + 1)]
    order = names[:]
    rng.shuffle(order)

    towers: List[List[str]] = []
    for block in order:
        if towers and rng.random() < 0.7:
            towers[rng.randrange(len(towers))].append(block)
        else:
            towers.append([block])
    if all(len(t) == 1 for t in towers):
        towers = [order]

    init = ["(handempty)"]
    buried: List[str] = []
    for tower in towers:
        init.append(f"(ontable {tower[0]})")
        for below, above in zip(tower, tower[1:]):
            init.append(f"(on {above} {below})")
            buried.append(below)
        init.append(f"(clear {tower[-1]})")
    target = rng.choice(sorted(buried))
    suffix = f"-s{seed}" if seed is not None else ""
    return _problem(name or f"blocks-clear-{blocks}{suffix}", "blocks",
                    [" ".join(names) + " - block"], init, [f"(clear {target})"])


def delivery_problem(size: int, name: Optional[str] = None) -> str:
    """size×size 网格，代理在 (0,0)，包裹在右上角，送到右下角"""
    if size < 2:
        raise ValueError("网格边长至少为2")
    cells = [[f"c{x}-{y}" for y in range(size)] for x in range(size)]
    init = []
    for x in range(size):
        for y in range(size):
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nx, ny = x + dx, y + dy
                if 0 <= nx < size and 0 <= ny < size:
                    init.append(f"(adjacent {cells[x][y]} {cells[nx][ny]})")
    init += [f"(at-agent {cells[0][0]})", f"(package-at p1 {cells[size - 1][size - 1]})", "(empty)"]
    flat = [c for column in cells for c in column]
    return _problem(name or f"delivery-{size}", "delivery",
                    [" ".join(flat) + " - cell", "p1 - package"],
                    init, [f"(package-at p1 {cells[size - 1][0]})"])


def spanner_problem(length: int, name: Optional[str] = None) -> str:
    """
    单向走廊 l0 → ... → l{length}，扳手在中途，螺母在终点

    走过扳手而没有拿起就进入死端。
    """
    if length < 2:
        raise ValueError("走廊长度至少为2")
    locations = [f"l{i}" for i in range(length + 1)]
    spanner_at = max(1, length // 2)
    init = [f"(link {a} {b})" for a, b in zip(locations, locations[1:])]
    init += [f"(at-man {locations[0]})", f"(spanner-at s1 {locations[spanner_at]})", "(useable s1)",
             f"(nut-at n1 {locations[-1]})", "(loose n1)"]
    return _problem(name or f"spanner-{length}", "spanner",
                    [" ".join(locations) + " - location", "s1 - spanner", "n1 - nut"],
                    init, ["(tightened n1)"])


DOMAINS: Dict[str, str] = {
    "gripper": GRIPPER_DOMAIN,
    "blocks-clear": BLOCKS_DOMAIN,
    "delivery": DELIVERY_DOMAIN,
    "spanner": SPANNER_DOMAIN,
}

GENERATORS: Dict[str, Callable[..., str]] = {
    "gripper": gripper_problem,
    "blocks-clear": blocks_clear_problem,
    "delivery": delivery_problem,
    "spanner": spanner_problem,
}


def domain_pddl(name: str) -> str:
    if name not in DOMAINS:
        raise KeyError(f"未知的领域 {name}，可选: {', '.join(sorted(DOMAINS))}")
    return DOMAINS[name]


def generate(name: str, sizes: Sequence[int], out_dir: Union[str, Path]) -> List[Path]:
    """
    把领域文件和每个规模的问题文件写入目录

    Returns:
        写出的文件路径，领域文件在前
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "domain.pddl"]
    written[0].write_text(domain_pddl(name), encoding="utf-8")
    for size in sizes:
        path = out / f"{name}-{size:03d}.pddl"
        path.write_text(GENERATORS[name](size), encoding="utf-8")
        written.append(path)
    logger.info(f"已生成 {name}: {len(sizes)} 个问题 → {out}")
    return written
