"""
STRIPS模型模块
定义领域、实例、状态、地面动作与迁移，负责地面化与后继状态生成
"""

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

# 原子用元组表示: (谓词, 参数1, 参数2, ...)
Atom = Tuple[str, ...]

ROOT_TYPE = "object"
GOAL_SUFFIX = "_g"


class PddlTypeError(TypeError):
    """实例或动作的类型不一致"""


def goal_copy(atom: Atom) -> Atom:
    """返回目标谓词副本 p_g(ū)"""
    return (atom[0] + GOAL_SUFFIX,) + tuple(atom[1:])


def is_goal_predicate(predicate: str) -> bool:
    return predicate.endswith(GOAL_SUFFIX)


def format_atom(atom: Atom) -> str:
    """原子的PDDL文本形式"""
    return "(" + " ".join(atom) + ")"


@dataclass(frozen=True)
class Literal:
    """动作模式中的前提文字，参数可以是变量或常量"""
    predicate: str
    args: Tuple[str, ...]
    positive: bool = True

    @property
    def is_equality(self) -> bool:
        return self.predicate == "="


@dataclass(frozen=True)
class ActionSchema:
    """动作模式"""
    name: str
    parameters: Tuple[Tuple[str, str], ...]
    precondition: Tuple[Literal, ...] = ()
    add_effects: Tuple[Atom, ...] = ()
    del_effects: Tuple[Atom, ...] = ()


@dataclass(frozen=True)
class DomainSpec:
    """
    领域描述：类型、常量、谓词签名与动作模式

    所有字段都是元组，保持声明顺序，便于结构比较与格式化输出。
    """
    name: str
    requirements: Tuple[str, ...] = ()
    types: Tuple[Tuple[str, str], ...] = ()
    constants: Tuple[Tuple[str, str], ...] = ()
    predicates: Tuple[Tuple[str, Tuple[str, ...]], ...] = ()
    schemas: Tuple[ActionSchema, ...] = ()

    @cached_property
    def type_parents(self) -> Dict[str, str]:
        parents = {ROOT_TYPE: ""}
        for name, parent in self.types:
            parents[name] = parent
        return parents

    @cached_property
    def predicate_signatures(self) -> Dict[str, Tuple[str, ...]]:
        return dict(self.predicates)

    @cached_property
    def constant_types(self) -> Dict[str, str]:
        return dict(self.constants)

    def is_subtype(self, type_name: str, ancestor: str) -> bool:
        """type_name 是否为 ancestor 或其子类型"""
        seen = set()
        current = type_name
        while current and current not in seen:
            if current == ancestor:
                return True
            seen.add(current)
            current = self.type_parents.get(current, "")
        return ancestor == ROOT_TYPE and type_name in self.type_parents


@dataclass(frozen=True)
class InstanceSpec:
    """规划实例：对象、初始状态和目标"""
    name: str
    domain: DomainSpec
    objects: Tuple[Tuple[str, str], ...] = ()
    init: FrozenSet[Atom] = frozenset()
    goal: FrozenSet[Atom] = frozenset()

    @cached_property
    def object_types(self) -> Dict[str, str]:
        """实例对象与领域常量的合并类型表"""
        table = dict(self.domain.constants)
        table.update(self.objects)
        return table

    @cached_property
    def universe(self) -> Tuple[str, ...]:
        return tuple(sorted(self.object_types))

    @cached_property
    def goal_atoms(self) -> FrozenSet[Atom]:
        return frozenset(goal_copy(atom) for atom in self.goal)

    def objects_of_type(self, type_name: str) -> List[str]:
        return sorted(name for name, t in self.object_types.items()
                      if self.domain.is_subtype(t, type_name))

    def initial_state(self) -> "State":
        return self.make_state(self.init)

    def make_state(self, atoms: Iterable[Atom]) -> "State":
        """用给定原子加上目标谓词原子构造状态"""
        return State(frozenset(atoms) | self.goal_atoms, self.name, self.universe)


@dataclass(frozen=True)
class State:
    """
    状态：地面原子集合，包含目标谓词原子

    相等性与哈希只依赖原子集合和实例名；universe 仅供特征求值使用。
    """
    atoms: FrozenSet[Atom]
    instance: str = ""
    universe: Tuple[str, ...] = field(default=(), compare=False, repr=False)

    @cached_property
    def key(self) -> Tuple[Atom, ...]:
        """排序后的原子索引"""
        return tuple(sorted(self.atoms))

    @cached_property
    def is_goal(self) -> bool:
        """所有目标原子在非目标副本上成立"""
        for atom in self.atoms:
            if is_goal_predicate(atom[0]):
                base = (atom[0][:-len(GOAL_SUFFIX)],) + atom[1:]
                if base not in self.atoms:
                    return False
        return True

    def fluent_atoms(self) -> FrozenSet[Atom]:
        return frozenset(a for a in self.atoms if not is_goal_predicate(a[0]))

    def __str__(self) -> str:
        return " ".join(format_atom(a) for a in sorted(self.fluent_atoms()))


@dataclass(frozen=True)
class GroundAction:
    """地面动作，add 与 delete 不相交"""
    schema: str
    binding: Tuple[str, ...]
    pos_pre: FrozenSet[Atom]
    neg_pre: FrozenSet[Atom]
    add: FrozenSet[Atom]
    delete: FrozenSet[Atom]

    @property
    def name(self) -> str:
        return "(" + " ".join((self.schema,) + self.binding) + ")"

    def applicable(self, atoms: FrozenSet[Atom]) -> bool:
        return self.pos_pre <= atoms and self.neg_pre.isdisjoint(atoms)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Transition:
    """状态迁移 (s, t)"""
    source: State
    target: State
    instance: str = ""

    @property
    def changed_atoms(self) -> Tuple[FrozenSet[Atom], FrozenSet[Atom]]:
        """(新增原子, 删除原子)"""
        return (self.target.atoms - self.source.atoms,
                self.source.atoms - self.target.atoms)


def _substitute(args: Sequence[str], binding: Dict[str, str]) -> Tuple[str, ...]:
    return tuple(binding.get(a, a) for a in args)


def check_instance(instance: InstanceSpec):
    """
    检查实例的类型一致性

    Raises:
        PddlTypeError: 对象类型未声明、原子谓词未声明、元数或参数类型不符
    """
    domain = instance.domain
    for name, type_name in instance.objects:
        if type_name not in domain.type_parents:
            raise PddlTypeError(f"对象 {name} 的类型 {type_name} 未声明")

    def check_atom(atom: Atom, where: str):
        signature = domain.predicate_signatures.get(atom[0])
        if signature is None:
            raise PddlTypeError(f"{where} 中的谓词 {atom[0]} 未声明")
        if len(signature) != len(atom) - 1:
            raise PddlTypeError(f"{where} 中的原子 {format_atom(atom)} 参数个数应为 {len(signature)}")
        for arg, expected in zip(atom[1:], signature):
            actual = instance.object_types.get(arg)
            if actual is None:
                raise PddlTypeError(f"{where} 中引用了未声明的对象 {arg}")
            if not domain.is_subtype(actual, expected):
                raise PddlTypeError(f"{where} 中对象 {arg} 的类型 {actual} 不是 {expected}")

    for atom in sorted(instance.init):
        check_atom(atom, "init")
    for atom in sorted(instance.goal):
        check_atom(atom, "goal")


def ground(instance: InstanceSpec) -> Tuple[GroundAction, ...]:
    """
    地面化实例的全部动作模式

    按模式名、再按绑定对象的字典序输出；违反静态相等文字的绑定被丢弃。

    Raises:
        PddlTypeError: 实例类型不一致
    """
    check_instance(instance)
    actions: List[GroundAction] = []

    for schema in sorted(instance.domain.schemas, key=lambda s: s.name):
        variables = [var for var, _ in schema.parameters]
        domains = [instance.objects_of_type(t) for _, t in schema.parameters]
        equalities = [lit for lit in schema.precondition if lit.is_equality]
        literals = [lit for lit in schema.precondition if not lit.is_equality]

        for objects in itertools.product(*domains):
            binding = dict(zip(variables, objects))
            if any((binding.get(a, a) == binding.get(b, b)) != lit.positive
                   for lit in equalities for a, b in [lit.args]):
                continue

            pos = frozenset((lit.predicate,) + _substitute(lit.args, binding)
                            for lit in literals if lit.positive)
            neg = frozenset((lit.predicate,) + _substitute(lit.args, binding)
                            for lit in literals if not lit.positive)
            add = frozenset((a[0],) + _substitute(a[1:], binding) for a in schema.add_effects)
            delete = frozenset((a[0],) + _substitute(a[1:], binding) for a in schema.del_effects)
            # 先删后加：同时被加和删的原子保持为真
            actions.append(GroundAction(schema.name, tuple(objects), pos, neg, add, delete - add))

    return tuple(actions)


def apply(state: State, action: GroundAction) -> State:
    """应用动作（先删后加），目标谓词原子不受影响"""
    return State((state.atoms - action.delete) | action.add, state.instance, state.universe)


def successors(state: State, actions: Sequence[GroundAction]) -> List[Tuple[GroundAction, State]]:
    """按动作顺序返回所有可应用动作及其后继状态"""
    return [(action, apply(state, action))
            for action in actions if action.applicable(state.atoms)]


def is_goal(state: State, instance: Optional[InstanceSpec] = None) -> bool:
    """G ⊆ state；给出实例时直接用实例目标判断"""
    if instance is None:
        return state.is_goal
    return instance.goal <= state.atoms
