"""
规划器模块
完备的宽度优先搜索：求最短规划、状态分类（目标/存活/死端）、可达性和 IW(k) 新颖性搜索
"""

import itertools
import threading
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, FrozenSet, List, Optional, Set, Tuple

from logger import get_logger
from strips_model import (
    GroundAction, InstanceSpec, State, Transition, ground, is_goal_predicate, successors,
)

logger = get_logger()

Accept = Callable[[State, State], bool]


class BudgetExceeded(Exception):
    """搜索超出节点或时间预算"""

    def __init__(self, nodes: int, message: str = ""):
        super().__init__(message or f"搜索预算耗尽，已扩展 {nodes} 个节点")
        self.nodes = nodes


@dataclass(frozen=True)
class Budget:
    """节点数和时间上限，None 表示不限"""
    max_nodes: Optional[int] = None
    max_seconds: Optional[float] = None

    def clock(self) -> "BudgetClock":
        return BudgetClock(self)


class BudgetClock:
    """一次搜索的预算计数"""

    def __init__(self, budget: Budget):
        self.budget = budget
        self.started = time.monotonic()
        self.nodes = 0

    def tick(self):
        self.nodes += 1
        if self.budget.max_nodes is not None and self.nodes > self.budget.max_nodes:
            raise BudgetExceeded(self.nodes)
        # 每256个节点检查一次时间
        if self.budget.max_seconds is not None and self.nodes % 256 == 0:
            if time.monotonic() - self.started > self.budget.max_seconds:
                raise BudgetExceeded(self.nodes, f"搜索超时，已扩展 {self.nodes} 个节点")


class StateClass(Enum):
    GOAL = "Goal"
    ALIVE = "Alive"
    DEAD_END = "DeadEnd"
    UNREACHABLE = "Unreachable"


@dataclass(frozen=True)
class Plan:
    """规划：动作序列及其诱导的状态序列"""
    instance: str
    actions: Tuple[GroundAction, ...]
    states: Tuple[State, ...]

    @property
    def transitions(self) -> Tuple[Transition, ...]:
        return tuple(Transition(s, t, self.instance) for s, t in zip(self.states, self.states[1:]))

    def __len__(self) -> int:
        return len(self.actions)


class Planner:
    """
    单个实例上的宽度优先规划器

    地面动作在构造时生成一次；状态分类结果缓存在实例级的侧缓存中，
    读操作无锁，写操作持有互斥锁。
    """

    def __init__(self, instance: InstanceSpec, budget: Optional[Budget] = None):
        self.instance = instance
        self.budget = budget or Budget()
        self.actions: Tuple[GroundAction, ...] = ground(instance)
        self.initial_state = instance.initial_state()
        self._classes: Dict[State, StateClass] = {}
        self._reachable: Optional[FrozenSet[State]] = None
        self._lock = threading.Lock()
        logger.debug(f"实例 {instance.name}: {len(self.actions)} 个地面动作")

    @property
    def name(self) -> str:
        return self.instance.name

    def successors(self, state: State) -> List[Tuple[GroundAction, State]]:
        return successors(state, self.actions)

    def is_goal(self, state: State) -> bool:
        return state.is_goal

    def _remember(self, states, state_class: StateClass):
        with self._lock:
            for state in states:
                self._classes.setdefault(state, state_class)

    def solve(self, from_state: Optional[State] = None, budget: Optional[Budget] = None) -> Optional[Plan]:
        """
        宽度优先求最短规划

        Args:
            from_state: 起始状态，缺省为初始状态
            budget: 搜索预算，缺省使用规划器预算

        Returns:
            最短规划；穷尽可达空间仍无解时返回 None

        Raises:
            BudgetExceeded: 超出预算
        """
        start = from_state if from_state is not None else self.initial_state
        if start.is_goal:
            return Plan(self.name, (), (start,))

        clock = (budget or self.budget).clock()
        parents: Dict[State, Optional[Tuple[State, GroundAction]]] = {start: None}
        queue = deque([start])
        while queue:
            state = queue.popleft()
            clock.tick()
            for action, succ in self.successors(state):
                if succ in parents:
                    continue
                parents[succ] = (state, action)
                if succ.is_goal:
                    plan = self._reconstruct(parents, succ)
                    self._remember(plan.states[:-1], StateClass.ALIVE)
                    return plan
                queue.append(succ)

        # 穷尽搜索：所有扩展过的状态都是死端
        self._remember(parents, StateClass.DEAD_END)
        return None

    def _reconstruct(self, parents, goal: State) -> Plan:
        actions: List[GroundAction] = []
        states = [goal]
        entry = parents[goal]
        while entry is not None:
            state, action = entry
            actions.append(action)
            states.append(state)
            entry = parents[state]
        return Plan(self.name, tuple(reversed(actions)), tuple(reversed(states)))

    def reachable_states(self, budget: Optional[Budget] = None) -> FrozenSet[State]:
        """从初始状态出发的全部可达状态"""
        if self._reachable is not None:
            return self._reachable
        clock = (budget or self.budget).clock()
        seen: Set[State] = {self.initial_state}
        queue = deque([self.initial_state])
        while queue:
            state = queue.popleft()
            clock.tick()
            for _, succ in self.successors(state):
                if succ not in seen:
                    seen.add(succ)
                    queue.append(succ)
        self._reachable = frozenset(seen)
        return self._reachable

    def classify(self, state: State, budget: Optional[Budget] = None,
                 check_reachable: bool = False) -> StateClass:
        """
        状态分类：目标、存活或死端（死端当且仅当 solve 无解）

        搜索在遇到目标或已知存活的状态时停止，已知死端的状态不再展开。
        check_reachable 为真时先检查可达性，不可达的状态归为 Unreachable。
        """
        if check_reachable and state not in self.reachable_states(budget):
            return StateClass.UNREACHABLE
        if state.is_goal:
            return StateClass.GOAL
        cached = self._classes.get(state)
        if cached is not None:
            return cached

        clock = (budget or self.budget).clock()
        parents: Dict[State, Optional[State]] = {state: None}
        queue = deque([state])
        while queue:
            current = queue.popleft()
            clock.tick()
            for _, succ in self.successors(current):
                if succ in parents:
                    continue
                parents[succ] = current
                known = self._classes.get(succ)
                if succ.is_goal or known == StateClass.ALIVE:
                    path = []
                    node: Optional[State] = current
                    while node is not None:
                        path.append(node)
                        node = parents[node]
                    self._remember(path, StateClass.ALIVE)
                    return StateClass.ALIVE
                if known != StateClass.DEAD_END:
                    queue.append(succ)

        # 穷尽搜索：所有访问过的状态都是死端
        self._remember(parents, StateClass.DEAD_END)
        return StateClass.DEAD_END

    def iw_search(self, from_state: State, k: Optional[int], accept: Accept,
                  budget: Optional[Budget] = None) -> Optional[Tuple[State, Optional[int]]]:
        """
        迭代宽度搜索，寻找满足 accept(from, t) 的最近状态 t

        依次运行 IW(0), IW(1), ..., IW(k)；IW(0) 只看直接后继。
        k 为 None 时在 IW(2) 之后退化为不剪枝的宽度优先搜索，返回宽度 None。

        Returns:
            (t, 宽度)，找不到时返回 None
        """
        clock = (budget or self.budget).clock()
        cap = 2 if k is None else k
        for width in range(0, cap + 1):
            found = self._iw(from_state, width, accept, clock)
            if found is not None:
                return found, width
        if k is None:
            found = self._iw(from_state, None, accept, clock)
            if found is not None:
                return found, None
        return None

    def _iw(self, start: State, width: Optional[int], accept: Accept,
            clock: BudgetClock) -> Optional[State]:
        if width == 0:
            clock.tick()
            for _, succ in self.successors(start):
                if accept(start, succ):
                    return succ
            return None

        seen_tuples: Set[Tuple] = set()
        seen_states: Set[State] = {start}

        def is_novel(state: State) -> bool:
            if width is None:
                if state in seen_states:
                    return False
                seen_states.add(state)
                return True
            fluents = sorted(a for a in state.atoms if not is_goal_predicate(a[0]))
            novel = False
            for size in range(1, width + 1):
                for combo in itertools.combinations(fluents, size):
                    if combo not in seen_tuples:
                        seen_tuples.add(combo)
                        novel = True
            return novel

        is_novel(start)
        queue = deque([start])
        while queue:
            state = queue.popleft()
            clock.tick()
            for _, succ in self.successors(state):
                if accept(start, succ):
                    return succ
                if is_novel(succ):
                    queue.append(succ)
        return None
