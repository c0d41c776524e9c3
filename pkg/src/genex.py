"""
GenEx 模块
由好/坏迁移诱导的碰撞集问题，以及带最小代价链、得分最大化和 Ord 无环约束的贪心求解器
"""

import heapq
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from graphlib import CycleError, TopologicalSorter
from typing import Any, Dict, Hashable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from features import Feature, FeatureEvaluator, FeaturePool
from logger import get_logger
from policy import Policy, Rule, TransitionSignature, compatible, rule_from_values
from strips_model import State, Transition, format_atom
from termination import ChangeTable, NotStratified, RankEntry, Ranking, stratify

logger = get_logger()


class OverlapError(Exception):
    """X⁺ 与 X⁻ 相交"""


def change_signature(feature: Feature, transition: Transition,
                     evaluator: Optional[FeatureEvaluator] = None) -> Tuple[int, int]:
    """(源状态布尔值, 变化方向)，方向为 1 增加、-1 减少、0 不变"""
    evaluator = evaluator or FeatureEvaluator([feature])
    pos = evaluator.features.index(feature)
    vs = int(evaluator.values(transition.source)[pos])
    vt = int(evaluator.values(transition.target)[pos])
    return int(vs > 0), (vt > vs) - (vt < vs)


def distinguishes(feature: Feature, e: Transition, e2: Transition,
                  evaluator: Optional[FeatureEvaluator] = None) -> bool:
    """f 在两个迁移上的变化签名不同"""
    evaluator = evaluator or FeatureEvaluator([feature])
    return change_signature(feature, e, evaluator) != change_signature(feature, e2, evaluator)


# ---- 碰撞集问题 ----

class SubsetKind(Enum):
    GOOD_CHANGE = "GoodChange"
    DISTINGUISH = "Distinguish"
    GOAL_SEP = "GoalSep"


@dataclass(frozen=True)
class Provenance:
    """
    子集来源

    GoodChange 的 items 为 (X⁺ 下标,)；Distinguish 为 (X⁺ 下标, X⁻ 下标)；
    GoalSep 为 (目标状态下标, 非目标状态下标)。
    """
    kind: SubsetKind
    items: Tuple[int, ...]

    def describe(self) -> str:
        if self.kind == SubsetKind.GOOD_CHANGE:
            return f"GoodChange(e{self.items[0]})"
        if self.kind == SubsetKind.DISTINGUISH:
            return f"Distinguish(e{self.items[0]}, e'{self.items[1]})"
        return f"GoalSep(s{self.items[0]}, s{self.items[1]})"


@dataclass
class HittingSetProblem:
    """
    碰撞集问题 H(F, X⁺, X⁻)

    subsets 是 (子集数 × 特征数) 的布尔矩阵；values 是 X⁺ 状态上的特征值矩阵，
    plus 给出每个 X⁺ 迁移的 (源, 目标) 行号。
    """
    costs: np.ndarray
    boolean: np.ndarray
    subsets: np.ndarray
    provenance: Tuple[Provenance, ...]
    values: np.ndarray
    plus: Tuple[Tuple[int, int], ...]
    minus_values: Optional[Tuple[np.ndarray, np.ndarray]] = None
    transitions: Tuple[Transition, ...] = ()
    minus_transitions: Tuple[Transition, ...] = ()
    states: Tuple[Hashable, ...] = ()

    def __len__(self) -> int:
        return self.subsets.shape[0]

    @property
    def num_features(self) -> int:
        return self.subsets.shape[1]

    def members(self, index: int) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.subsets[index]))

    def change_table(self) -> ChangeTable:
        """X⁺ 的迁移表，列为全部特征"""
        src = np.array([i for i, _ in self.plus], dtype=np.int64)
        dst = np.array([j for _, j in self.plus], dtype=np.int64)
        return ChangeTable(self.values[src], self.values[dst], tuple(range(self.num_features)))

    def hits(self, G) -> bool:
        ids = np.array(sorted(G), dtype=np.int64)
        if len(self) == 0:
            return True
        if ids.size == 0:
            return False
        return bool(self.subsets[:, ids].any(axis=1).all())

    def describe_subset(self, index: int) -> str:
        prov = self.provenance[index]
        text = prov.describe()
        if prov.kind == SubsetKind.GOOD_CHANGE and self.transitions:
            text += f" {_transition_text(self.transitions[prov.items[0]])}"
        elif prov.kind == SubsetKind.DISTINGUISH and self.transitions and self.minus_transitions:
            text += (f" {_transition_text(self.transitions[prov.items[0]])}"
                     f" vs {_transition_text(self.minus_transitions[prov.items[1]])}")
        return text


def _transition_text(transition: Transition) -> str:
    added, deleted = transition.changed_atoms
    parts = [f"-{format_atom(a)}" for a in sorted(deleted)] + [f"+{format_atom(a)}" for a in sorted(added)]
    return f"[{transition.instance}: {' '.join(parts) or 'no change'}]"


def _signs(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    return np.sign(target - source).astype(np.int8)


def build_hsp_from_values(values: np.ndarray, goal: Sequence[bool],
                          plus: Sequence[Tuple[int, int]], minus_source: np.ndarray,
                          minus_target: np.ndarray, costs: Sequence[int],
                          boolean: Optional[Sequence[bool]] = None,
                          minus_pairs: Optional[Sequence[Tuple[Hashable, Hashable]]] = None,
                          plus_pairs: Optional[Sequence[Tuple[Hashable, Hashable]]] = None) -> HittingSetProblem:
    """
    从特征值表直接构造碰撞集问题

    Args:
        values: X⁺ 中出现的状态的特征值矩阵（状态 × 特征）
        goal: 每个状态是否为目标状态
        plus: 每个 X⁺ 迁移的 (源行号, 目标行号)
        minus_source / minus_target: X⁻ 迁移的源/目标特征值矩阵
        costs: 特征代价
        boolean: 布尔特征标记，布尔列被截断到 {0,1}
        plus_pairs / minus_pairs: 迁移的身份，用于检查 X⁺ ∩ X⁻

    Raises:
        OverlapError: 同一迁移同时出现在 X⁺ 和 X⁻
        ValueError: X⁺ 为空
    """
    if not plus:
        raise ValueError("X⁺ 不能为空")
    if plus_pairs is not None and minus_pairs is not None:
        overlap = set(plus_pairs) & set(minus_pairs)
        if overlap:
            raise OverlapError(f"{len(overlap)} 个迁移同时属于 X⁺ 和 X⁻")

    values = np.asarray(values, dtype=np.int64)
    n = values.shape[1]
    boolean = np.zeros(n, dtype=bool) if boolean is None else np.asarray(boolean, dtype=bool)
    minus_source = np.asarray(minus_source, dtype=np.int64).reshape(-1, n)
    minus_target = np.asarray(minus_target, dtype=np.int64).reshape(-1, n)
    if boolean.any():
        values = values.copy()
        values[:, boolean] = np.minimum(values[:, boolean], 1)
        minus_source = minus_source.copy()
        minus_target = minus_target.copy()
        minus_source[:, boolean] = np.minimum(minus_source[:, boolean], 1)
        minus_target[:, boolean] = np.minimum(minus_target[:, boolean], 1)

    src = np.array([i for i, _ in plus], dtype=np.int64)
    dst = np.array([j for _, j in plus], dtype=np.int64)
    plus_bool = values[src] > 0
    plus_sign = _signs(values[src], values[dst])
    minus_bool = minus_source > 0
    minus_sign = _signs(minus_source, minus_target)

    m = minus_source.shape[0]
    # 行序：GoodChange，然后 Distinguish 按 (i, j)，最后 GoalSep 按 (s, t)
    blocks: List[np.ndarray] = [plus_sign != 0]
    provenance: List[Provenance] = [Provenance(SubsetKind.GOOD_CHANGE, (i,)) for i in range(len(plus))]
    if m:
        distinguish = ((plus_bool[:, None, :] != minus_bool[None, :, :])
                       | (plus_sign[:, None, :] != minus_sign[None, :, :]))
        blocks.append(distinguish.reshape(-1, n))
        provenance.extend(Provenance(SubsetKind.DISTINGUISH, (i, j))
                          for i in range(len(plus)) for j in range(m))

    used = sorted({i for pair in plus for i in pair})
    goals = [s for s in used if goal[s]]
    others = [s for s in used if not goal[s]]
    if goals and others:
        state_bool = values > 0
        separation = state_bool[goals][:, None, :] != state_bool[others][None, :, :]
        blocks.append(separation.reshape(-1, n))
        provenance.extend(Provenance(SubsetKind.GOAL_SEP, (s, t)) for s in goals for t in others)

    subsets = np.vstack(blocks)
    return HittingSetProblem(
        costs=np.asarray(costs, dtype=np.int64),
        boolean=boolean,
        subsets=subsets,
        provenance=tuple(provenance),
        values=values,
        plus=tuple((int(i), int(j)) for i, j in plus),
        minus_values=(minus_source, minus_target),
    )


def build_hsp(pool: FeaturePool, X_plus: Sequence[Transition], X_minus: Sequence[Transition],
              evaluator: Optional[FeatureEvaluator] = None) -> HittingSetProblem:
    """
    在特征池上构造 H(F, X⁺, X⁻)

    Raises:
        OverlapError: X⁺ ∩ X⁻ ≠ ∅
    """
    X_plus = list(dict.fromkeys(X_plus))
    X_minus = list(dict.fromkeys(X_minus))
    overlap = set(X_plus) & set(X_minus)
    if overlap:
        raise OverlapError(f"{len(overlap)} 个迁移同时属于 X⁺ 和 X⁻")
    evaluator = evaluator or FeatureEvaluator(pool.features)

    index: Dict[State, int] = {}
    for t in X_plus:
        index.setdefault(t.source, len(index))
        index.setdefault(t.target, len(index))
    states = list(index)
    n = len(pool)
    problem = build_hsp_from_values(
        values=evaluator.matrix(states),
        goal=[s.is_goal for s in states],
        plus=[(index[t.source], index[t.target]) for t in X_plus],
        minus_source=evaluator.matrix([t.source for t in X_minus]).reshape(-1, n),
        minus_target=evaluator.matrix([t.target for t in X_minus]).reshape(-1, n),
        costs=pool.costs,
        boolean=pool.boolean_mask,
    )
    problem.transitions = tuple(X_plus)
    problem.minus_transitions = tuple(X_minus)
    problem.states = tuple(states)
    return problem


# ---- 单调关系与链 ----

class MonotoneRelations:
    """X⁺ 上的单调与 1-条件单调关系；只依赖 X⁺，GenEx 调用内不变"""

    BLOCK = 256

    def __init__(self, problem: HittingSetProblem):
        table = problem.change_table()
        self.n = problem.num_features
        delta = np.sign(table.target - table.source)
        self.monotone = ~((delta > 0).any(axis=0) & (delta < 0).any(axis=0))
        self._increase = (delta > 0).astype(np.float32)
        self._decrease = (delta < 0).astype(np.float32)
        unchanged = delta == 0
        source_bool = table.source > 0
        self._fixed = ((unchanged & ~source_bool).astype(np.float32),
                       (unchanged & source_bool).astype(np.float32))
        self._blocks: Dict[int, np.ndarray] = {}

    def _block(self, start: int) -> np.ndarray:
        """特征 g ∈ [start, start+BLOCK) 的支撑矩阵，行按 g、列按 f"""
        stop = min(start + self.BLOCK, self.n)
        result = np.ones((stop - start, self.n), dtype=bool)
        for fixed in self._fixed:
            rows = fixed[:, start:stop].T
            result &= ~((rows @ self._increase > 0) & (rows @ self._decrease > 0))
        result[np.arange(stop - start), np.arange(start, stop)] = False
        return result

    def supported_by(self, g: int) -> np.ndarray:
        """f 在给定 g 时单调的布尔向量（按 f 索引）"""
        start = g - g % self.BLOCK
        block = self._blocks.get(start)
        if block is None:
            block = self._blocks[start] = self._block(start)
        return block[g - start]


@dataclass(frozen=True)
class Chain:
    """特征链 ⟨f_0, ..., f⟩：f_0 单调，后一特征在给定前一特征时单调"""
    features: Tuple[int, ...]
    cost: int

    @property
    def target(self) -> int:
        return self.features[-1]

    @property
    def edges(self) -> Tuple[Tuple[int, int], ...]:
        return tuple(zip(self.features, self.features[1:]))


def compute_chains(problem: HittingSetProblem, relations: MonotoneRelations,
                   costs: np.ndarray) -> Dict[int, Chain]:
    """
    当前代价下每个特征的最小代价链

    单调特征的链只有它自己；其余特征在支撑图上做最短路，边 g→f 表示给定 g 时 f 单调。
    代价相同时取字典序最小的路径。没有链的特征不出现在结果中。
    """
    n = problem.num_features
    costs = np.asarray(costs, dtype=np.int64)
    dist = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    best: Dict[int, Tuple[int, ...]] = {}
    heap: List[Tuple[int, Tuple[int, ...]]] = []
    for f in np.flatnonzero(relations.monotone):
        f = int(f)
        dist[f] = costs[f]
        best[f] = (f,)
        heapq.heappush(heap, (int(costs[f]), (f,)))

    non_monotone = ~relations.monotone
    while heap:
        cost, path = heapq.heappop(heap)
        g = path[-1]
        if done[g] or best.get(g) != path or dist[g] != cost:
            continue
        done[g] = True
        reach = relations.supported_by(g) & non_monotone & ~done
        reach[list(path)] = False
        targets = np.flatnonzero(reach)
        if not targets.size:
            continue
        candidate = cost + costs[targets]
        current = dist[targets]
        # 严格更优直接替换，等价时比较路径的字典序
        for f, c in zip(targets[candidate <= current], candidate[candidate <= current]):
            f, c = int(f), int(c)
            extended = path + (f,)
            if c < dist[f] or extended < best[f]:
                dist[f] = c
                best[f] = extended
                heapq.heappush(heap, (c, extended))

    return {f: Chain(path, int(dist[f])) for f, path in sorted(best.items())}


class OrdGraph:
    """已接受链的边，始终无环"""

    def __init__(self):
        self.edges: Set[Tuple[int, int]] = set()

    def acyclic_with(self, edges: Sequence[Tuple[int, int]]) -> bool:
        new = set(edges) - self.edges
        if not new:
            return True
        sorter = TopologicalSorter()
        for a, b in self.edges | new:
            sorter.add(b, a)
        try:
            sorter.prepare()
        except CycleError:
            return False
        return True

    def add(self, edges: Sequence[Tuple[int, int]]):
        if not self.acyclic_with(edges):
            raise ValueError("加入的边会使 Ord 出现环")
        self.edges |= set(edges)

    def sorted_edges(self) -> List[Tuple[int, int]]:
        return sorted(self.edges)


# ---- 求解 ----

class FailureReason(Enum):
    EDGE_UNHIT = "EdgeUnhit"
    NO_ELIGIBLE = "NoEligible"


@dataclass
class GenexTrace:
    iterations: List[Dict[str, Any]] = field(default_factory=list)

    def record(self, **entry):
        self.iterations.append(entry)


@dataclass
class GenexSolution:
    G: Tuple[int, ...]
    ranking: Ranking
    ord: OrdGraph
    trace: GenexTrace


@dataclass
class GenexFailure:
    reason: FailureReason
    witness: int
    provenance: Provenance
    description: str
    trace: GenexTrace


GenexResult = Union[GenexSolution, GenexFailure]


def _fail(problem: HittingSetProblem, reason: FailureReason, index: int, trace: GenexTrace) -> GenexFailure:
    description = problem.describe_subset(index)
    logger.debug(f"GenEx 失败 ({reason.value}): 未命中子集 {description}")
    return GenexFailure(reason, index, problem.provenance[index], description, trace)


def run_genex(problem: HittingSetProblem) -> GenexResult:
    """
    贪心求解碰撞集问题

    每轮选取可用特征 f* 使 score(f) = |{S : G∩S=∅ 且 C_f∩S≠∅}| / cost(C_f) 最大，
    将 C_f* 加入 G、链边加入 Ord，已选特征代价置零并重算链。
    得分相同按 (链代价, 特征编号) 取最小。

    Returns:
        GenexSolution，或带最小下标未命中子集的 GenexFailure
    """
    trace = GenexTrace()
    for index, prov in enumerate(problem.provenance):
        if prov.kind == SubsetKind.GOOD_CHANGE and not problem.subsets[index].any():
            return _fail(problem, FailureReason.EDGE_UNHIT, index, trace)

    relations = MonotoneRelations(problem)
    costs = problem.costs.astype(np.int64).copy()
    subsets = problem.subsets
    unhit = np.ones(len(problem), dtype=bool)
    G: List[int] = []
    support: Dict[int, Optional[int]] = {}
    ord_graph = OrdGraph()

    while unhit.any():
        chains = compute_chains(problem, relations, costs)
        open_rows = subsets[unhit]
        single = open_rows.sum(axis=0)
        ranked: List[Tuple[Fraction, int, int, Chain, int]] = []
        for f, chain in chains.items():
            if chain.cost == 0:
                continue
            if len(chain.features) == 1:
                covered = int(single[f])
            else:
                covered = int(open_rows[:, list(chain.features)].any(axis=1).sum())
            if covered == 0:
                continue
            ranked.append((Fraction(covered, chain.cost), chain.cost, f, chain, covered))
        ranked.sort(key=lambda entry: (-entry[0], entry[1], entry[2]))

        choice = next((entry for entry in ranked if ord_graph.acyclic_with(entry[3].edges)), None)
        if choice is None:
            witness = int(np.flatnonzero(unhit)[0])
            return _fail(problem, FailureReason.NO_ELIGIBLE, witness, trace)

        score, _, f, chain, covered = choice
        before = int(unhit.sum())
        ord_graph.add(chain.edges)
        previous = None
        for g in chain.features:
            if g not in support:
                support[g] = previous
                G.append(g)
            previous = g
            costs[g] = 0
        unhit &= ~subsets[:, list(chain.features)].any(axis=1)
        after = int(unhit.sum())
        trace.record(iteration=len(trace.iterations) + 1, feature=f, chain=list(chain.features),
                     score=str(score), cost=chain.cost, unhit_before=before, unhit_after=after)
        logger.debug(f"GenEx 选择特征 {f}，链 {list(chain.features)}，得分 {score}，未命中 {before}→{after}")

    return GenexSolution(tuple(sorted(G)), _ranking_from_supports(support), ord_graph, trace)


def _ranking_from_supports(support: Dict[int, Optional[int]]) -> Ranking:
    ranking = Ranking()

    def rank_of(f: int) -> int:
        if f in ranking:
            return ranking[f].rank
        g = support[f]
        if g is None:
            ranking[f] = RankEntry(0, ())
        else:
            ranking[f] = RankEntry(rank_of(g) + 1, (g,))
        return ranking[f].rank

    for f in sorted(support):
        rank_of(f)
    return Ranking(sorted(ranking.items()))


# ---- 投影策略 ----

def project_rules(problem: HittingSetProblem, G: Sequence[int]) -> List[Rule]:
    """π(G, X⁺)：每个不同的投影一条规则，按首次出现排序"""
    ids = sorted(G)
    boolean = [bool(problem.boolean[i]) for i in ids]
    rules: Dict[Rule, None] = {}
    for i, j in problem.plus:
        rule = rule_from_values(ids, problem.values[i, ids], problem.values[j, ids], boolean)
        rules.setdefault(rule, None)
    return list(rules)


def project_policy(pool: FeaturePool, problem: HittingSetProblem, solution: GenexSolution) -> Policy:
    rules = project_rules(problem, solution.G)
    ranking = Ranking({f: e for f, e in solution.ranking.items() if f in set(solution.G)})
    return Policy.from_pool(rules, pool, solution.G, ranking)


def solution_violations(problem: HittingSetProblem, G: Sequence[int]) -> List[str]:
    """检查碰撞集性质与投影策略的覆盖/排除，返回违反项"""
    problems: List[str] = []
    if not problem.hits(G):
        problems.append("G 未命中所有子集")
    ids = sorted(G)
    boolean = frozenset(i for i in ids if problem.boolean[i])
    rules = project_rules(problem, ids)

    def sig(source: np.ndarray, target: np.ndarray) -> TransitionSignature:
        return TransitionSignature({f: (int(source[f]), int(target[f])) for f in ids}, boolean)

    for k, (i, j) in enumerate(problem.plus):
        if not any(compatible(r, sig(problem.values[i], problem.values[j])) for r in rules):
            problems.append(f"X⁺ 迁移 {k} 不在策略中")
    if problem.minus_values is not None:
        ms, mt = problem.minus_values
        for k in range(ms.shape[0]):
            if any(compatible(r, sig(ms[k], mt[k])) for r in rules):
                problems.append(f"X⁻ 迁移 {k} 在策略中")
    costs = {f: int(problem.costs[f]) for f in ids}
    if isinstance(stratify(rules, ids, k=1, costs=costs), NotStratified):
        problems.append("投影策略不可 1-分层")
    return problems


def trace_to_json(trace: GenexTrace, result: Optional[GenexResult] = None) -> Dict[str, Any]:
    data: Dict[str, Any] = {"schema": 1, "iterations": trace.iterations}
    if isinstance(result, GenexSolution):
        data["outcome"] = {"solution": list(result.G),
                           "ord": [list(e) for e in result.ord.sorted_edges()]}
    elif isinstance(result, GenexFailure):
        data["outcome"] = {"failure": result.reason.value, "witness": result.witness,
                           "subset": result.description}
    return data
