"""
终止性模块
单调性与（k-）分层：ρ 子集、规则集与迁移集上的条件单调性、排序构造和 k-分层检验

布尔特征按 0/1 数值特征处理；规则只有在条件固定了 p 的源值时才蕴含 p 的翻转。
"""

import itertools
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from logger import get_logger
from policy import ConditionTest, EffectKind, Rule

logger = get_logger()


@dataclass(frozen=True)
class ChangeProfile:
    may_increase: bool = False
    may_decrease: bool = False


@dataclass(frozen=True)
class RankEntry:
    rank: int
    support: Tuple[int, ...] = ()


class Ranking(Dict[int, RankEntry]):
    """特征 → (排名, 支撑特征)"""

    @property
    def max_rank(self) -> int:
        return max((entry.rank for entry in self.values()), default=-1)


@dataclass(frozen=True)
class NotStratified:
    """无法分层的特征集合"""
    features: FrozenSet[int]
    reason: str = ""


@dataclass(frozen=True)
class ChangeTable:
    """
    迁移集合的数值形式：每行一个迁移，列由 features 给出

    source/target 是特征值矩阵，布尔特征已截断到 {0,1}。
    """
    source: np.ndarray
    target: np.ndarray
    features: Tuple[int, ...]

    def __post_init__(self):
        if self.source.shape != self.target.shape:
            raise ValueError("源值与目标值矩阵形状不一致")
        object.__setattr__(self, "_columns", {f: i for i, f in enumerate(self.features)})

    def __len__(self) -> int:
        return self.source.shape[0]

    def column(self, feature: int) -> Optional[int]:
        return self._columns.get(feature)

    def delta(self, feature: int) -> np.ndarray:
        col = self._columns[feature]
        return np.sign(self.target[:, col] - self.source[:, col])

    def rows(self, mask: np.ndarray) -> "ChangeTable":
        return ChangeTable(self.source[mask], self.target[mask], self.features)


RulesOrTable = Union[Sequence[Rule], ChangeTable]


# ---- 规则层面 ----

def rule_profile(rule: Rule, feature: int) -> ChangeProfile:
    """规则可能使特征增加/减少；未知效果两个方向都算"""
    effect = rule.effect(feature)
    if effect is None:
        return ChangeProfile()
    condition = rule.condition(feature)
    if effect == EffectKind.INC:
        return ChangeProfile(may_increase=True)
    if effect == EffectKind.DEC:
        return ChangeProfile(may_decrease=True)
    if effect == EffectKind.SET_TRUE:
        return ChangeProfile(may_increase=condition != ConditionTest.BOOL_TRUE)
    if effect == EffectKind.SET_FALSE:
        return ChangeProfile(may_decrease=condition != ConditionTest.BOOL_FALSE)
    return ChangeProfile(True, True)


def entails_change_of(rule: Rule, feature: int) -> bool:
    effect = rule.effect(feature)
    if effect in (EffectKind.INC, EffectKind.DEC):
        return True
    condition = rule.condition(feature)
    return ((effect == EffectKind.SET_TRUE and condition == ConditionTest.BOOL_FALSE)
            or (effect == EffectKind.SET_FALSE and condition == ConditionTest.BOOL_TRUE))


def entails_change(rule: Rule) -> bool:
    """规则是否蕴含某个特征的变化"""
    return any(entails_change_of(rule, e.feature) for e in rule.effects)


def rho(rules: Sequence[Rule], g: int, tag) -> List[Rule]:
    """
    ρ(R, g, tag)

    "=" 去掉蕴含 g 变化的规则；0 再去掉条件为 g>0（布尔为 g）的规则；
    1 再去掉条件为 g=0（布尔为 ¬g）的规则。
    """
    if tag not in ("=", 0, 1):
        raise ValueError(f"未知的 ρ 标记: {tag!r}")
    kept = [r for r in rules if not entails_change_of(r, g)]
    if tag == 0:
        kept = [r for r in kept if r.condition(g) not in (ConditionTest.GT0, ConditionTest.BOOL_TRUE)]
    elif tag == 1:
        kept = [r for r in kept if r.condition(g) not in (ConditionTest.EQ0, ConditionTest.BOOL_FALSE)]
    return kept


# ---- 迁移层面 ----

def rho_transitions(table: ChangeTable, g: int, value: int) -> ChangeTable:
    """{(s,t) : g(s) = g(t) 且 bool(g(s)) = value}"""
    return table.rows(_context_mask(table, g, value))


def _context_mask(table: ChangeTable, g: int, value: int) -> np.ndarray:
    col = table.column(g)
    if col is None:
        return np.ones(len(table), dtype=bool) if value == 0 else np.zeros(len(table), dtype=bool)
    unchanged = table.source[:, col] == table.target[:, col]
    return unchanged & ((table.source[:, col] > 0) == bool(value))


def transition_profile(table: ChangeTable, feature: int) -> ChangeProfile:
    if table.column(feature) is None or len(table) == 0:
        return ChangeProfile()
    delta = table.delta(feature)
    return ChangeProfile(bool((delta > 0).any()), bool((delta < 0).any()))


# ---- 单调性 ----

def monotone(rules_or_table: RulesOrTable, feature: int) -> bool:
    """不存在增加 f 的规则/迁移，或不存在减少 f 的规则/迁移"""
    if isinstance(rules_or_table, ChangeTable):
        profile = transition_profile(rules_or_table, feature)
        return not (profile.may_increase and profile.may_decrease)
    increase = decrease = False
    for rule in rules_or_table:
        profile = rule_profile(rule, feature)
        increase |= profile.may_increase
        decrease |= profile.may_decrease
        if increase and decrease:
            return False
    return True


def monotone_given(rules_or_table: RulesOrTable, feature: int, G: Iterable[int]) -> bool:
    """对 G 的每个布尔赋值 ν，f 在 ρ(R, G, ν) 中单调"""
    G = tuple(G)
    if feature in G:
        raise ValueError("条件单调性要求 f 不在 G 中")
    for valuation in itertools.product((0, 1), repeat=len(G)):
        if isinstance(rules_or_table, ChangeTable):
            mask = np.ones(len(rules_or_table), dtype=bool)
            for g, value in zip(G, valuation):
                mask &= _context_mask(rules_or_table, g, value)
            context: RulesOrTable = rules_or_table.rows(mask)
        else:
            context = list(rules_or_table)
            for g, value in zip(G, valuation):
                context = rho(context, g, value)
        if not monotone(context, feature):
            return False
    return True


def used_features(rules_or_table: RulesOrTable) -> List[int]:
    if isinstance(rules_or_table, ChangeTable):
        return sorted(rules_or_table.features)
    used = set()
    for rule in rules_or_table:
        used |= rule.features
    return sorted(used)


def _supports(eligible: Sequence[int], k: int, costs: Optional[Mapping[int, int]]) -> List[Tuple[int, ...]]:
    """按 (复杂度之和, 大小, 字典序) 排好的候选支撑"""
    candidates = [G for size in range(1, k + 1) for G in itertools.combinations(eligible, size)]
    cost = (lambda g: costs.get(g, 1)) if costs is not None else (lambda g: 1)
    return sorted(candidates, key=lambda G: (sum(cost(g) for g in G), len(G), G))


def stratify(rules_or_table: RulesOrTable, features: Optional[Iterable[int]] = None,
             k: int = 1, costs: Optional[Mapping[int, int]] = None) -> Union[Ranking, NotStratified]:
    """
    分阶段构造排名

    第0阶段给单调特征排名0；第 ℓ 阶段给能被排名低于 ℓ 的至多 k 个特征支撑的未排名特征
    排名 ℓ。支撑按 (复杂度之和, 大小, 字典序) 取最小者；没有给出 costs 时每个特征记 1。

    Returns:
        Ranking，或列出无法排名特征的 NotStratified
    """
    if k < 1:
        raise ValueError("k 必须为正整数")
    F = sorted(set(features) if features is not None else used_features(rules_or_table))

    if not isinstance(rules_or_table, ChangeTable):
        for rule in rules_or_table:
            if not entails_change(rule):
                return NotStratified(frozenset(F), "存在不蕴含任何特征变化的规则")

    ranking = Ranking()
    for f in F:
        if monotone(rules_or_table, f):
            ranking[f] = RankEntry(0, ())
    unranked = [f for f in F if f not in ranking]

    level = 1
    while unranked:
        candidates = _supports(sorted(ranking), k, costs)
        newly: Dict[int, Tuple[int, ...]] = {}
        for f in unranked:
            support = next((G for G in candidates if monotone_given(rules_or_table, f, G)), None)
            if support is not None:
                newly[f] = support
        if not newly:
            logger.debug(f"分层失败，无法排名的特征: {unranked}")
            return NotStratified(frozenset(unranked), "没有可用的单调支撑")
        for f, support in newly.items():
            ranking[f] = RankEntry(level, support)
        unranked = [f for f in unranked if f not in newly]
        level += 1

    return ranking


def certifies(rules_or_table: RulesOrTable, ranking: Ranking) -> bool:
    """给定排名是否仍然证明分层（排名与支撑不变）"""
    if not isinstance(rules_or_table, ChangeTable):
        if not all(entails_change(rule) for rule in rules_or_table):
            return False
    for f in used_features(rules_or_table):
        entry = ranking.get(f)
        if entry is None:
            return False
        if entry.rank == 0 or not entry.support:
            if not monotone(rules_or_table, f):
                return False
            continue
        if any(ranking.get(g) is None or ranking[g].rank >= entry.rank for g in entry.support):
            return False
        if not monotone_given(rules_or_table, f, entry.support):
            return False
    return True
