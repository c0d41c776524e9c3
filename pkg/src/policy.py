"""
策略模块
规则策略的表示、迁移相容性语义、迁移在特征集上的投影，以及策略验证（封闭、安全、无环）
"""

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import (
    TYPE_CHECKING, Any, Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional,
    Sequence, Tuple, Union,
)

from features import Feature, FeatureEvaluator, FeatureKind, FeaturePool, eval_feature, parse_concept
from logger import get_logger
from planner import Budget, BudgetExceeded, Planner, StateClass
from strips_model import State, Transition

if TYPE_CHECKING:
    from termination import Ranking

logger = get_logger()


class ConditionTest(Enum):
    BOOL_TRUE = "p"
    BOOL_FALSE = "¬p"
    EQ0 = "n=0"
    GT0 = "n>0"

    @property
    def is_boolean(self) -> bool:
        return self in (ConditionTest.BOOL_TRUE, ConditionTest.BOOL_FALSE)

    @property
    def positive(self) -> bool:
        """条件要求特征取值为正（p 或 n>0）"""
        return self in (ConditionTest.BOOL_TRUE, ConditionTest.GT0)


class EffectKind(Enum):
    SET_TRUE = "p"
    SET_FALSE = "¬p"
    UNK_BOOL = "p?"
    INC = "n↑"
    DEC = "n↓"
    UNK_NUM = "n?"

    @property
    def is_boolean(self) -> bool:
        return self in (EffectKind.SET_TRUE, EffectKind.SET_FALSE, EffectKind.UNK_BOOL)


@dataclass(frozen=True)
class ConditionAtom:
    feature: int
    test: ConditionTest


@dataclass(frozen=True)
class EffectAtom:
    feature: int
    effect: EffectKind


@dataclass(frozen=True)
class Rule:
    """规则 C ↦ E，每个特征在条件和效果中至多出现一次"""
    conditions: Tuple[ConditionAtom, ...] = ()
    effects: Tuple[EffectAtom, ...] = ()

    def __post_init__(self):
        conditions = tuple(sorted(self.conditions, key=lambda a: a.feature))
        effects = tuple(sorted(self.effects, key=lambda a: a.feature))
        if len({c.feature for c in conditions}) != len(conditions):
            raise ValueError("规则条件中同一特征出现多次")
        if len({e.feature for e in effects}) != len(effects):
            raise ValueError("规则效果中同一特征出现多次")
        object.__setattr__(self, "conditions", conditions)
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "_cond", {c.feature: c.test for c in conditions})
        object.__setattr__(self, "_eff", {e.feature: e.effect for e in effects})

    def __hash__(self):
        return hash((tuple((c.feature, c.test) for c in self.conditions),
                     tuple((e.feature, e.effect) for e in self.effects)))

    def __eq__(self, other):
        if not isinstance(other, Rule):
            return NotImplemented
        return self._cond == other._cond and self._eff == other._eff

    def condition(self, feature: int) -> Optional[ConditionTest]:
        return self._cond.get(feature)

    def effect(self, feature: int) -> Optional[EffectKind]:
        return self._eff.get(feature)

    @property
    def features(self) -> FrozenSet[int]:
        return frozenset(self._cond) | frozenset(self._eff)

    def replace(self, conditions: Optional[Iterable[ConditionAtom]] = None,
                effects: Optional[Iterable[EffectAtom]] = None) -> "Rule":
        return Rule(tuple(self.conditions if conditions is None else conditions),
                    tuple(self.effects if effects is None else effects))


@dataclass(frozen=True)
class TransitionSignature:
    """每个特征在 (s, t) 上的取值对，以及哪些特征是布尔的"""
    values: Mapping[int, Tuple[int, int]]
    boolean: FrozenSet[int] = frozenset()


def _condition_holds(test: ConditionTest, value: int) -> bool:
    return value > 0 if test.positive else value == 0


def compatible(rule: Rule, sig: TransitionSignature) -> bool:
    """
    (s, t) 与规则相容：条件在 s 上成立，效果在 t 上成立，
    且规则未提及的特征保持不变（布尔特征保持真值，数值特征保持精确值）
    """
    for atom in rule.conditions:
        if not _condition_holds(atom.test, sig.values[atom.feature][0]):
            return False
    for feature, (vs, vt) in sig.values.items():
        effect = rule.effect(feature)
        if feature in sig.boolean:
            if effect is None:
                if (vs > 0) != (vt > 0):
                    return False
            elif effect == EffectKind.SET_TRUE and vt == 0:
                return False
            elif effect == EffectKind.SET_FALSE and vt > 0:
                return False
        else:
            if effect is None:
                if vs != vt:
                    return False
            elif effect == EffectKind.INC and not vt > vs:
                return False
            elif effect == EffectKind.DEC and not vt < vs:
                return False
    return True


def rule_from_values(feature_ids: Sequence[int], source: Sequence[int], target: Sequence[int],
                     boolean: Sequence[bool]) -> Rule:
    """按源状态布尔值和变化方向把一条迁移投影成规则"""
    conditions: List[ConditionAtom] = []
    effects: List[EffectAtom] = []
    for fid, vs, vt, is_bool in zip(feature_ids, source, target, boolean):
        vs, vt = int(vs), int(vt)
        if is_bool:
            vs, vt = min(vs, 1), min(vt, 1)
            conditions.append(ConditionAtom(fid, ConditionTest.BOOL_TRUE if vs else ConditionTest.BOOL_FALSE))
            if vt != vs:
                effects.append(EffectAtom(fid, EffectKind.SET_TRUE if vt else EffectKind.SET_FALSE))
        else:
            conditions.append(ConditionAtom(fid, ConditionTest.GT0 if vs > 0 else ConditionTest.EQ0))
            if vt > vs:
                effects.append(EffectAtom(fid, EffectKind.INC))
            elif vt < vs:
                effects.append(EffectAtom(fid, EffectKind.DEC))
    return Rule(tuple(conditions), tuple(effects))


def project(transition: Transition, G: Iterable[int], pool: FeaturePool) -> Rule:
    """把迁移投影到特征集 G 上"""
    ids = sorted(G)
    if not ids:
        raise ValueError("投影需要非空特征集")
    features = [pool[i] for i in ids]
    source = [eval_feature(f, transition.source) for f in features]
    target = [eval_feature(f, transition.target) for f in features]
    return rule_from_values(ids, source, target, [f.is_boolean for f in features])


class Policy:
    """
    规则策略：有序规则集合及其引用的特征

    rules 中的特征编号是 features 的键（通常是特征池编号）。
    """

    def __init__(self, rules: Sequence[Rule], features: Mapping[int, Feature],
                 ranking: Optional["Ranking"] = None):
        self.rules: Tuple[Rule, ...] = tuple(rules)
        self.features: Dict[int, Feature] = dict(sorted(features.items()))
        self.ranking = ranking
        missing = set()
        for rule in self.rules:
            missing |= rule.features - set(self.features)
        if missing:
            raise ValueError(f"规则引用了未定义的特征: {sorted(missing)}")
        self._evaluator: Optional[FeatureEvaluator] = None

    @classmethod
    def from_pool(cls, rules: Sequence[Rule], pool: FeaturePool, G: Iterable[int],
                  ranking: Optional["Ranking"] = None) -> "Policy":
        return cls(rules, {i: pool[i] for i in G}, ranking)

    def __len__(self) -> int:
        return len(self.rules)

    @property
    def feature_ids(self) -> Tuple[int, ...]:
        return tuple(self.features)

    @property
    def boolean_ids(self) -> FrozenSet[int]:
        return frozenset(i for i, f in self.features.items() if f.is_boolean)

    @property
    def evaluator(self) -> FeatureEvaluator:
        if self._evaluator is None:
            self._evaluator = FeatureEvaluator(list(self.features.values()), cache_size=1 << 17)
        return self._evaluator

    def signature(self, source: State, target: State) -> TransitionSignature:
        vs = self.evaluator.values(source)
        vt = self.evaluator.values(target)
        values = {fid: (int(a), int(b)) for fid, a, b in zip(self.features, vs, vt)}
        return TransitionSignature(values, self.boolean_ids)

    def contains(self, source: State, target: State) -> bool:
        if not self.rules:
            return False
        sig = self.signature(source, target)
        return any(compatible(rule, sig) for rule in self.rules)

    def successors(self, planner: Planner, state: State) -> List[State]:
        """π-后继，去重并保持后继顺序"""
        seen: Dict[State, None] = {}
        for _, succ in planner.successors(state):
            if succ not in seen and self.contains(state, succ):
                seen[succ] = None
        return list(seen)

    def local_names(self) -> Dict[int, str]:
        """序列化使用的特征名 f0, f1, ..."""
        return {fid: f"f{pos}" for pos, fid in enumerate(self.features)}


def policy_contains(policy: Policy, transition: Transition, pool: Optional[FeaturePool] = None) -> bool:
    """迁移是否与策略的某条规则相容"""
    return policy.contains(transition.source, transition.target)


# ---- 验证 ----

class VerdictKind(Enum):
    SOLVES = "Solves"
    NOT_CLOSED = "NotClosed"
    UNSAFE = "Unsafe"
    CYCLIC = "Cyclic"


@dataclass(frozen=True)
class Verdict:
    """验证结论；失败时带见证状态、迁移和从初始状态出发的轨迹"""
    kind: VerdictKind
    visited: int
    state: Optional[State] = None
    transition: Optional[Transition] = None
    trajectory: Tuple[State, ...] = ()

    @property
    def solves(self) -> bool:
        return self.kind == VerdictKind.SOLVES


_GRAY, _BLACK = 1, 2


def analyze(policy: Policy, planner: Planner,
            classify: Optional[Callable[[State], StateClass]] = None,
            budget: Optional[Budget] = None) -> Verdict:
    """
    深度优先遍历 π-可达图，检查封闭、安全和无环

    目标状态是终止状态。每个新进入的非目标状态先查询死端判定，死端报告 Unsafe，
    证据是进入它的 π-迁移；否则在策略没有后继时报告 NotClosed。
    在路径上重复出现的状态报告 Cyclic，因此环只可能在存活状态之间出现。

    Raises:
        BudgetExceeded: 访问状态数超出预算
    """
    oracle = classify or planner.classify
    clock = (budget or Budget()).clock()
    color: Dict[State, int] = {}
    path: List[State] = []
    stack: List[Iterable[State]] = []
    instance = planner.name

    def enter(state: State) -> Optional[Verdict]:
        clock.tick()
        color[state] = _GRAY
        path.append(state)
        if planner.is_goal(state):
            stack.append(iter(()))
            return None
        if oracle(state) == StateClass.DEAD_END:
            transition = Transition(path[-2], state, instance) if len(path) > 1 else None
            return Verdict(VerdictKind.UNSAFE, clock.nodes, state=state, transition=transition,
                           trajectory=tuple(path))
        succs = policy.successors(planner, state)
        if not succs:
            return Verdict(VerdictKind.NOT_CLOSED, clock.nodes, state=state, trajectory=tuple(path))
        stack.append(iter(succs))
        return None

    verdict = enter(planner.initial_state)
    if verdict is not None:
        return verdict
    while stack:
        succ = next(stack[-1], None)
        if succ is None:
            stack.pop()
            color[path.pop()] = _BLACK
            continue
        mark = color.get(succ)
        if mark == _GRAY:
            return Verdict(VerdictKind.CYCLIC, clock.nodes, state=succ,
                           transition=Transition(path[-1], succ, instance),
                           trajectory=tuple(path) + (succ,))
        if mark == _BLACK:
            continue
        verdict = enter(succ)
        if verdict is not None:
            return verdict
    return Verdict(VerdictKind.SOLVES, clock.nodes)


def analyze_many(policy: Policy, planners: Sequence[Planner], jobs: int = 1,
                 budget: Optional[Budget] = None) -> List[Verdict]:
    """在多个实例上并行验证，结果与输入顺序一致"""
    if jobs <= 1 or len(planners) <= 1:
        return [analyze(policy, p, budget=budget) for p in planners]
    # 先在主线程预热特征求值器，避免并发创建
    _ = policy.evaluator
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(lambda p: analyze(policy, p, budget=budget), planners))


# ---- 序列化与打印 ----

_COND_TEXT = {
    ConditionTest.BOOL_TRUE: "{}", ConditionTest.BOOL_FALSE: "¬{}",
    ConditionTest.EQ0: "{}=0", ConditionTest.GT0: "{}>0",
}
_EFF_TEXT = {
    EffectKind.SET_TRUE: "{}", EffectKind.SET_FALSE: "¬{}", EffectKind.UNK_BOOL: "{}?",
    EffectKind.INC: "{}↑", EffectKind.DEC: "{}↓", EffectKind.UNK_NUM: "{}?",
}
_TOKEN = re.compile(r"^(¬?)([a-z][a-z0-9_]*)(=0|>0|↑|↓|\?)?$")


def _condition_text(atom: ConditionAtom, names: Mapping[int, str]) -> str:
    return _COND_TEXT[atom.test].format(names[atom.feature])


def _effect_text(atom: EffectAtom, names: Mapping[int, str]) -> str:
    return _EFF_TEXT[atom.effect].format(names[atom.feature])


def format_rule(rule: Rule, names: Mapping[int, str]) -> str:
    cond = ", ".join(_condition_text(c, names) for c in rule.conditions)
    eff = ", ".join(_effect_text(e, names) for e in rule.effects)
    return f"{{{cond}}} ↦ {{{eff}}}"


def format_policy(policy: Policy) -> str:
    """按规则记号打印策略"""
    names = policy.local_names()
    lines = ["Features:"]
    for fid, feature in policy.features.items():
        extra = ""
        if policy.ranking is not None and fid in policy.ranking:
            entry = policy.ranking[fid]
            support = ", ".join(names[g] for g in entry.support)
            extra = f", rank {entry.rank}" + (f" via {support}" if support else "")
        lines.append(f"  {names[fid]} = |{feature.concept.sexpr()}|  "
                     f"[{feature.kind.value}, complexity {feature.complexity}{extra}]")
    lines.append("Rules:")
    for i, rule in enumerate(policy.rules, start=1):
        lines.append(f"  r{i}: {format_rule(rule, names)}")
    return "\n".join(lines) + "\n"


def policy_to_json(policy: Policy) -> Dict[str, Any]:
    names = policy.local_names()
    data: Dict[str, Any] = {
        "schema": 1,
        "features": [f.concept.sexpr() for f in policy.features.values()],
        "kinds": [f.kind.value for f in policy.features.values()],
        "rules": [
            {"cond": [_condition_text(c, names) for c in rule.conditions],
             "eff": [_effect_text(e, names) for e in rule.effects]}
            for rule in policy.rules
        ],
    }
    if policy.ranking is not None:
        data["ranking"] = {
            names[fid]: {"rank": entry.rank, "support": [names[g] for g in entry.support]}
            for fid, entry in sorted(policy.ranking.items()) if fid in names
        }
    return data


def _parse_token(token: str, ids: Mapping[str, int], boolean: FrozenSet[int], effect: bool):
    match = _TOKEN.match(token)
    if not match or match.group(2) not in ids:
        raise ValueError(f"无法解析的规则记号: {token!r}")
    negated, name, suffix = match.group(1), match.group(2), match.group(3)
    fid = ids[name]
    is_bool = fid in boolean
    if not effect:
        if is_bool and suffix is None:
            return ConditionAtom(fid, ConditionTest.BOOL_FALSE if negated else ConditionTest.BOOL_TRUE)
        if not is_bool and not negated and suffix in ("=0", ">0"):
            return ConditionAtom(fid, ConditionTest.EQ0 if suffix == "=0" else ConditionTest.GT0)
    else:
        if is_bool and suffix is None:
            return EffectAtom(fid, EffectKind.SET_FALSE if negated else EffectKind.SET_TRUE)
        if is_bool and suffix == "?" and not negated:
            return EffectAtom(fid, EffectKind.UNK_BOOL)
        if not is_bool and not negated and suffix in ("↑", "↓", "?"):
            kind = {"↑": EffectKind.INC, "↓": EffectKind.DEC, "?": EffectKind.UNK_NUM}[suffix]
            return EffectAtom(fid, kind)
    raise ValueError(f"记号 {token!r} 与特征类型不符")


def policy_from_json(data: Mapping[str, Any]) -> Policy:
    """从JSON重建策略，特征编号为 0..n-1"""
    from termination import Ranking, RankEntry

    concepts = data.get("features", [])
    kinds = data.get("kinds") or ["numerical"] * len(concepts)
    if len(kinds) != len(concepts):
        raise ValueError("features 与 kinds 长度不一致")
    features = {i: Feature(i, FeatureKind(kind), parse_concept(text))
                for i, (text, kind) in enumerate(zip(concepts, kinds))}
    ids = {f"f{i}": i for i in features}
    boolean = frozenset(i for i, f in features.items() if f.is_boolean)

    rules = []
    for entry in data.get("rules", []):
        conditions = [_parse_token(t, ids, boolean, effect=False) for t in entry.get("cond", [])]
        effects = [_parse_token(t, ids, boolean, effect=True) for t in entry.get("eff", [])]
        rules.append(Rule(tuple(conditions), tuple(effects)))

    ranking = None
    if "ranking" in data:
        ranking = Ranking({ids[name]: RankEntry(int(info["rank"]), tuple(ids[g] for g in info["support"]))
                           for name, info in data["ranking"].items()})
    return Policy(rules, features, ranking)


def save_policy(policy: Policy, path: Union[str, Path]):
    Path(path).write_text(json.dumps(policy_to_json(policy), indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def load_policy(path: Union[str, Path]) -> Policy:
    return policy_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# ---- 有效宽度 ----

@dataclass(frozen=True)
class WidthResult:
    """按策略执行 IW(k) 的结果；宽度取遇到的各状态上找到相容对所需的最小 k"""
    instance: str
    solved: bool
    max_width: Optional[int] = None
    avg_width: Optional[float] = None
    length: int = 0
    budget_exceeded: bool = False


def effective_width(policy: Policy, planner: Planner, k_max: int = 2,
                    budget: Optional[Budget] = None) -> WidthResult:
    """
    从初始状态出发反复用 IW(0..k_max) 寻找与策略相容（或为目标）的状态 t，再从 t 继续

    重复访问状态或 IW(k_max) 找不到时判为未解决。
    """
    state = planner.initial_state
    widths: List[int] = []
    visited = {state}

    def accept(source: State, target: State) -> bool:
        return target.is_goal or policy.contains(source, target)

    try:
        while not state.is_goal:
            found = planner.iw_search(state, k_max, accept, budget)
            if found is None:
                return WidthResult(planner.name, False, max(widths, default=None), None, len(widths))
            state, width = found
            widths.append(width)
            if state in visited:
                return WidthResult(planner.name, False, max(widths), None, len(widths))
            visited.add(state)
    except BudgetExceeded:
        return WidthResult(planner.name, False, max(widths, default=None), None, len(widths),
                           budget_exceeded=True)

    average = sum(widths) / len(widths) if widths else 0.0
    return WidthResult(planner.name, True, max(widths, default=0), average, len(widths))
