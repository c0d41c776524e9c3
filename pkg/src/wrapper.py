"""
学习外壳模块
调度规划器、特征池、GenEx、策略简化与验证：在内循环中维护 X⁺/X⁻，在外循环中按策略 S1/S2 更新 Q'
"""

import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

from features import FeatureEvaluator, FeaturePool
from genex import FailureReason as GenexReason
from genex import GenexFailure, build_hsp, project_policy, run_genex, trace_to_json
from logger import get_logger
from planner import Budget, BudgetExceeded, Plan, Planner
from policy import EffectAtom, EffectKind, Policy, Rule, VerdictKind, analyze, analyze_many, compatible
from strips_model import InstanceSpec, State, Transition
from termination import NotStratified, Ranking, certifies, stratify

logger = get_logger()


class Strategy(Enum):
    S1 = "S1"
    S2 = "S2"


class FailureReason(Enum):
    EDGE = "Edge"
    UNHIT = "Unhit"
    EXHAUSTED = "Exhausted"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class WrapperFailure:
    reason: FailureReason
    message: str = ""
    witness: str = ""


class _Timeout(Exception):
    pass


@dataclass(frozen=True)
class WrapperConfig:
    k: int = 1
    strategy: str = "auto"
    simplify: bool = False
    time_budget: Optional[float] = None
    max_inner: int = 500
    jobs: int = 1
    verify_nodes: Optional[int] = None
    cache_size: int = 65536

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> "WrapperConfig":
        """从配置字典的 learner/verify/features 段构造"""
        learner = config.get("learner", {})
        verify = config.get("verify", {})
        features = config.get("features", {})
        time_budget = learner.get("time_budget")
        return cls(
            k=int(learner.get("k", 1)),
            strategy=str(learner.get("strategy", "auto")).lower(),
            simplify=bool(learner.get("simplify", False)),
            time_budget=float(time_budget) if time_budget else None,
            max_inner=int(learner.get("max_inner", 500)),
            jobs=int(verify.get("jobs", 1)),
            verify_nodes=int(verify["node_budget"]) if verify.get("node_budget") else None,
            cache_size=int(features.get("cache_size", 65536)),
        )

    def strategies(self) -> List[Strategy]:
        if self.strategy == "s1":
            return [Strategy.S1]
        if self.strategy == "s2":
            return [Strategy.S2]
        if self.strategy == "auto":
            return [Strategy.S1, Strategy.S2]
        raise ValueError(f"未知的策略: {self.strategy}")


# ---- 训练集 ----

class TrainingInstance:
    """训练实例：规划器、种子规划以及按实例累积的 X⁺_P / X⁻_P"""

    def __init__(self, planner: Planner, plan: Plan):
        self.planner = planner
        self.plan = plan
        self.plus: Dict[Transition, None] = {}
        self.minus: Dict[Transition, None] = {}
        self.reset()

    @property
    def name(self) -> str:
        return self.planner.name

    @property
    def instance(self) -> InstanceSpec:
        return self.planner.instance

    def reset(self):
        self.plus = dict.fromkeys(self.plan.transitions)
        self.minus = {}


class TrainingSet:
    """按规划长度从长到短（同长按名称）排序的训练实例"""

    def __init__(self, instances: Sequence[TrainingInstance]):
        if not instances:
            raise ValueError("训练集为空")
        self.instances: Tuple[TrainingInstance, ...] = tuple(
            sorted(instances, key=lambda t: (-len(t.plan), t.name)))

    @classmethod
    def build(cls, problems: Sequence[InstanceSpec], budget: Optional[Budget] = None) -> "TrainingSet":
        """为每个实例求种子规划，无解或超出预算的实例被排除"""
        kept: List[TrainingInstance] = []
        for problem in problems:
            planner = Planner(problem, budget)
            try:
                plan = planner.solve()
            except BudgetExceeded as e:
                logger.warning(f"实例 {problem.name} 求解超出预算，已排除: {e}")
                continue
            if plan is None:
                logger.warning(f"实例 {problem.name} 无解，已排除")
                continue
            kept.append(TrainingInstance(planner, plan))
        return cls(kept)

    def __len__(self) -> int:
        return len(self.instances)

    def __getitem__(self, index: int) -> TrainingInstance:
        return self.instances[index]

    @property
    def planners(self) -> List[Planner]:
        return [t.planner for t in self.instances]

    @property
    def domain_name(self) -> str:
        return self.instances[0].instance.domain.name

    def reset(self):
        for inst in self.instances:
            inst.reset()

    def states_seen(self) -> int:
        """种子规划与增补迁移中出现的不同状态数"""
        seen: Set[State] = set()
        for inst in self.instances:
            seen.update(inst.plan.states)
            for t in list(inst.plus) + list(inst.minus):
                seen.add(t.source)
                seen.add(t.target)
        return len(seen)


def collect_sample(training: TrainingSet, mode: str = "plans", limit: int = 2000) -> List[Transition]:
    """
    特征池生成所用的样本迁移

    plans: 种子规划上的状态及其全部一步后继；
    reachable: 每个实例从初始状态宽度优先展开的至多 limit 个状态。
    """
    sample: Dict[Transition, None] = {}
    for inst in training.instances:
        planner = inst.planner
        if mode == "plans":
            for state in inst.plan.states:
                for _, succ in planner.successors(state):
                    sample.setdefault(Transition(state, succ, inst.name), None)
        elif mode == "reachable":
            seen = {planner.initial_state}
            queue = deque([planner.initial_state])
            while queue:
                state = queue.popleft()
                for _, succ in planner.successors(state):
                    sample.setdefault(Transition(state, succ, inst.name), None)
                    if succ not in seen and len(seen) < limit:
                        seen.add(succ)
                        queue.append(succ)
        else:
            raise ValueError(f"未知的采样方式: {mode}")
    return list(sample)


# ---- 状态与报告 ----

@dataclass
class WrapperState:
    """Q' 以训练集下标（从0开始）表示"""
    strategy: Strategy
    size: int
    current: Tuple[int, ...] = (0,)
    visited: Set[Tuple[int, ...]] = field(default_factory=set)
    outer: int = 0
    inner: int = 0
    inner_last: int = 0

    def __post_init__(self):
        self.visited.add(self.current)


@dataclass
class RunReport:
    domain: str = ""
    Q: int = 0
    S: int = 0
    F: int = 0
    strategy: str = ""
    outer: int = 0
    inner: int = 0
    Q_prime: int = 0
    inner_star: int = 0
    X_plus: int = 0
    X_minus: int = 0
    H: int = 0
    G: int = 0
    pi: int = 0
    prep: float = 0.0
    genex: float = 0.0
    verify: float = 0.0
    total: float = 0.0
    outcome: str = "PolicyFound"
    witness: str = ""
    genex_trace: Optional[Dict[str, Any]] = field(default=None, repr=False)

    @property
    def success(self) -> bool:
        return self.outcome == "PolicyFound"

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "schema": 1,
            "domain": self.domain, "Q": self.Q, "S": self.S, "F": self.F,
            "strategy": self.strategy, "outer": self.outer, "inner": self.inner,
            "Q_prime": self.Q_prime, "inner_star": self.inner_star,
            "X_plus": self.X_plus, "X_minus": self.X_minus, "H": self.H,
            "outcome": self.outcome,
            "times": {"prep": round(self.prep, 3), "genex": round(self.genex, 3),
                      "verify": round(self.verify, 3), "total": round(self.total, 3)},
        }
        if self.success:
            data["G"] = self.G
            data["pi"] = self.pi
        else:
            data["witness"] = self.witness
        return data


# ---- Q' 更新 ----

def next_Q(state: WrapperState, failing: int) -> Optional[Tuple[int, ...]]:
    """
    π 解决 Q' 但不解决 P_failing（最小下标）时的下一个 Q'

    S1: Q'={P_k} 更新为 {P_ℓ}（ℓ>k）否则 {P_k+1}，重复或越界时返回 None。
    S2: k 为 Q' 最大下标，ℓ<k 时取 Q' ∪ {P_ℓ}，否则 {P_ℓ}；外循环超过 |Q|² 次时返回 None。
    """
    if state.strategy == Strategy.S1:
        k = state.current[0]
        new = (failing,) if failing > k else (k + 1,)
        if new[0] >= state.size or new in state.visited:
            return None
        return new
    k = max(state.current)
    new = tuple(sorted(set(state.current) | {failing})) if failing < k else (failing,)
    if state.outer >= state.size ** 2:
        return None
    return new


def switch_strategy(state: WrapperState, training: Optional[TrainingSet] = None) -> WrapperState:
    """S1 用尽后以 Q'={P_1} 重新开始 S2，X⁺/X⁻ 回到种子规划迁移"""
    if training is not None:
        training.reset()
    logger.info(f"策略 {state.strategy.value} 已用尽，切换到 S2")
    return WrapperState(Strategy.S2, state.size)


# ---- 简化 ----

_WIDENED = {
    EffectKind.INC: EffectKind.UNK_NUM,
    EffectKind.DEC: EffectKind.UNK_NUM,
    EffectKind.SET_TRUE: EffectKind.UNK_BOOL,
    EffectKind.SET_FALSE: EffectKind.UNK_BOOL,
}


def _edits(rule: Rule):
    for atom in rule.conditions:
        yield rule.replace(conditions=[c for c in rule.conditions if c is not atom])
    for atom in rule.effects:
        if atom.effect in _WIDENED:
            widened = EffectAtom(atom.feature, _WIDENED[atom.effect])
            yield rule.replace(effects=[widened if e is atom else e for e in rule.effects])


def simplify(policy: Policy, G: Sequence[int], ranking: Ranking, X_minus: Sequence[Transition]) -> Policy:
    """
    贪心地删除条件、把具体效果改为未知效果

    每次修改只在以下条件仍成立时接受：同一排名仍证明分层（支撑不变），
    且策略不含任何 X⁻ 迁移。
    """
    rules = list(policy.rules)
    ranking = Ranking({f: e for f, e in ranking.items() if f in set(G)})
    minus = [policy.signature(t.source, t.target) for t in X_minus]

    changed = True
    while changed:
        changed = False
        for i, rule in enumerate(rules):
            for edited in _edits(rule):
                candidate = rules[:i] + [edited] + rules[i + 1:]
                if any(compatible(edited, sig) for sig in minus):
                    continue
                if not certifies(candidate, ranking):
                    continue
                rules = candidate
                changed = True
                break
            if changed:
                break

    result = Policy(list(dict.fromkeys(rules)), policy.features, policy.ranking)
    logger.debug(f"策略简化: {len(policy.rules)} → {len(result.rules)} 条规则")
    return result


# ---- 主循环 ----

class _Run:
    def __init__(self, training: TrainingSet, pool: FeaturePool, config: WrapperConfig,
                 report: RunReport, started: float):
        self.training = training
        self.pool = pool
        self.config = config
        self.report = report
        self.started = started
        self.evaluator = FeatureEvaluator(pool.features, config.cache_size)
        self.budget = Budget(max_nodes=config.verify_nodes)

    def check_time(self):
        if self.config.time_budget is not None and time.monotonic() - self.started > self.config.time_budget:
            raise _Timeout(f"超过学习时间上限 {self.config.time_budget:.0f}s")

    def run(self, state: WrapperState) -> Union[Policy, WrapperFailure]:
        training, report = self.training, self.report
        while True:
            state.outer += 1
            state.inner_last = 0
            members = [training[i] for i in state.current]
            X_plus: Dict[Transition, None] = {}
            X_minus: Dict[Transition, None] = {}
            for inst in members:
                X_plus.update(inst.plus)
                X_minus.update(inst.minus)
            logger.info(f"[{state.strategy.value}] 外循环 {state.outer}: "
                        f"Q' = {[training[i].name for i in state.current]}")

            while True:
                self.check_time()
                if state.inner >= self.config.max_inner:
                    raise _Timeout(f"内循环次数超过上限 {self.config.max_inner}")
                state.inner += 1
                state.inner_last += 1
                self._count(state, X_plus, X_minus)

                clock = time.monotonic()
                problem = build_hsp(self.pool, list(X_plus), list(X_minus), self.evaluator)
                result = run_genex(problem)
                report.genex += time.monotonic() - clock
                report.H = len(problem)
                report.genex_trace = trace_to_json(result.trace, result)
                if isinstance(result, GenexFailure):
                    reason = FailureReason.EDGE if result.reason == GenexReason.EDGE_UNHIT else FailureReason.UNHIT
                    return WrapperFailure(reason, "GenEx 失败", result.description)

                policy = project_policy(self.pool, problem, result)
                if self.config.simplify:
                    policy = simplify(policy, result.G, result.ranking, list(X_minus))
                report.G, report.pi = len(policy.features), len(policy.rules)
                logger.info(f"  内循环 {state.inner}: |X⁺|={len(X_plus)} |X⁻|={len(X_minus)} "
                            f"|H|={len(problem)} |G|={report.G} |π|={report.pi}")

                clock = time.monotonic()
                added = self._augment(policy, members, X_plus, X_minus)
                report.verify += time.monotonic() - clock
                if not added:
                    break

            self._count(state, X_plus, X_minus)
            clock = time.monotonic()
            verdicts = analyze_many(policy, training.planners, self.config.jobs, self.budget)
            report.verify += time.monotonic() - clock
            failing = [i for i, v in enumerate(verdicts) if not v.solves]
            if not failing:
                self._check_learned(policy, verdicts)
                return policy

            ell = failing[0]
            logger.info(f"  策略在 {training[ell].name} 上失败: {verdicts[ell].kind.value}")
            new = next_Q(state, ell)
            if new is None:
                return WrapperFailure(FailureReason.EXHAUSTED, f"策略 {state.strategy.value} 没有可用的 Q'")
            state.current = new
            state.visited.add(new)

    def _augment(self, policy: Policy, members: Sequence[TrainingInstance],
                 X_plus: Dict[Transition, None], X_minus: Dict[Transition, None]) -> bool:
        """在 Q' 上执行 π；遇到非封闭或不安全时增补一个迁移"""
        for inst in members:
            verdict = analyze(policy, inst.planner, budget=self.budget)
            if verdict.kind == VerdictKind.NOT_CLOSED:
                plan = inst.planner.solve(verdict.state)
                transition = plan.transitions[0]
                inst.plus[transition] = None
                X_plus[transition] = None
                logger.debug(f"  {inst.name}: 非封闭，X⁺ 增加 {transition.source} → {transition.target}")
                return True
            if verdict.kind == VerdictKind.UNSAFE:
                transition = verdict.transition
                if transition is None:
                    raise RuntimeError(f"实例 {inst.name} 的初始状态是死端")
                inst.minus[transition] = None
                X_minus[transition] = None
                logger.debug(f"  {inst.name}: 不安全，X⁻ 增加 {transition.source} → {transition.target}")
                return True
            if verdict.kind == VerdictKind.CYCLIC:
                raise RuntimeError(f"分层策略在 {inst.name} 上产生了环")
        return False

    def _count(self, state: WrapperState, X_plus, X_minus):
        report = self.report
        report.strategy = state.strategy.value
        report.outer, report.inner, report.inner_star = state.outer, state.inner, state.inner_last
        report.Q_prime = len(state.current)
        report.X_plus, report.X_minus = len(X_plus), len(X_minus)
        report.S = self.training.states_seen()

    def _check_learned(self, policy: Policy, verdicts):
        if any(v.kind == VerdictKind.CYCLIC for v in verdicts):
            raise RuntimeError("学到的策略产生了环")
        costs = {i: f.complexity for i, f in policy.features.items()}
        if isinstance(stratify(policy.rules, policy.feature_ids, k=self.config.k, costs=costs), NotStratified):
            raise RuntimeError("学到的策略不可分层")


def run_wrapper(training: TrainingSet, pool: FeaturePool, config: Optional[WrapperConfig] = None,
                prep_time: float = 0.0) -> Tuple[Union[Policy, WrapperFailure], RunReport]:
    """
    在训练集上学习一般策略

    Args:
        training: 排好序的训练实例
        pool: 特征池
        config: 学习参数
        prep_time: 调用方的准备时间（规划与特征池生成），计入报告

    Returns:
        (策略, 报告) 或 (WrapperFailure, 报告)
    """
    config = config or WrapperConfig()
    if len(pool) == 0:
        raise ValueError("特征池为空")
    started = time.monotonic()
    report = RunReport(domain=training.domain_name, Q=len(training), F=len(pool), prep=prep_time)
    run = _Run(training, pool, config, report, started)

    outcome: Union[Policy, WrapperFailure] = WrapperFailure(FailureReason.EXHAUSTED)
    state: Optional[WrapperState] = None
    try:
        for strategy in config.strategies():
            if state is None:
                training.reset()
                state = WrapperState(strategy, len(training))
            else:
                state = switch_strategy(state, training)
            outcome = run.run(state)
            if not (isinstance(outcome, WrapperFailure) and outcome.reason == FailureReason.EXHAUSTED):
                break
    except (_Timeout, BudgetExceeded) as e:
        outcome = WrapperFailure(FailureReason.TIMEOUT, str(e))

    report.S = training.states_seen()
    report.total = prep_time + time.monotonic() - started
    if isinstance(outcome, WrapperFailure):
        report.outcome = outcome.reason.value
        report.witness = outcome.witness or outcome.message
        logger.warning(f"学习失败: {outcome.reason.value} {outcome.message} {outcome.witness}".rstrip())
    else:
        report.G, report.pi = len(outcome.features), len(outcome.rules)
        logger.info(f"找到策略: |G|={report.G} |π|={report.pi}，外循环 {report.outer}，内循环 {report.inner}")
    return outcome, report
