"""
特征模块
描述逻辑概念/角色语法、指称求值、特征复杂度，以及带冗余剪枝的有界特征池生成

指称在位掩码上计算：实例对象排序后第 i 个对象对应第 i 位。
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Sequence, Tuple, Union

import numpy as np

from logger import get_logger
from pddl_io import ParseDiagnostic, PddlParseError, SExpr, Token, parse_sexpr
from strips_model import GOAL_SUFFIX, DomainSpec, State, Transition

logger = get_logger()

Rows = Tuple[int, ...]


class UnknownSymbol(Exception):
    """概念引用了状态中不存在的常量"""


class EmptySample(Exception):
    """特征池生成需要非空样本"""


class FeatureKind(Enum):
    BOOLEAN = "boolean"
    NUMERICAL = "numerical"


# ---- 状态解释 ----

class Interpretation:
    """一个状态上的一元/二元谓词位掩码"""

    def __init__(self, state: State):
        objects = state.universe or tuple(sorted({a for atom in state.atoms for a in atom[1:]}))
        self.objects: Tuple[str, ...] = objects
        self.index = {name: i for i, name in enumerate(objects)}
        self.full = (1 << len(objects)) - 1
        self.unary: Dict[Tuple[str, int], int] = {}
        binary: Dict[str, List[int]] = {}
        nullary = set()

        for atom in state.atoms:
            pred, args = atom[0], atom[1:]
            if not args:
                nullary.add(pred)
            for pos, arg in enumerate(args):
                self.unary[(pred, pos)] = self.unary.get((pred, pos), 0) | (1 << self.index[arg])
            if len(args) == 2:
                rows = binary.setdefault(pred, [0] * len(objects))
                rows[self.index[args[0]]] |= 1 << self.index[args[1]]

        self.binary: Dict[str, Rows] = {pred: tuple(rows) for pred, rows in binary.items()}
        self.nullary: FrozenSet[str] = frozenset(nullary)
        self.empty_rows: Rows = (0,) * len(objects)

    def names(self, mask: int) -> FrozenSet[str]:
        return frozenset(name for i, name in enumerate(self.objects) if mask >> i & 1)


_interpretations = lru_cache(maxsize=4096)(Interpretation)


# ---- 角色表达式 ----

class RoleExpr:
    """角色表达式基类"""

    def rows(self, interp: Interpretation) -> Rows:
        raise NotImplementedError

    @property
    def complexity(self) -> int:
        return 1 + sum(child.complexity for child in self.children())

    @property
    def depth(self) -> int:
        children = self.children()
        return 1 + max(child.depth for child in children) if children else 0

    def children(self) -> Tuple[Any, ...]:
        return ()

    def __str__(self) -> str:
        return self.sexpr()

    def sexpr(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class PrimitiveRole(RoleExpr):
    predicate: str

    def rows(self, interp):
        return interp.binary.get(self.predicate, interp.empty_rows)

    def sexpr(self):
        return f"(role {self.predicate})"


@dataclass(frozen=True)
class GoalPrimitiveRole(RoleExpr):
    predicate: str

    def rows(self, interp):
        return interp.binary.get(self.predicate + GOAL_SUFFIX, interp.empty_rows)

    def sexpr(self):
        return f"(goal-role {self.predicate})"


@dataclass(frozen=True)
class InverseRole(RoleExpr):
    role: RoleExpr

    def children(self):
        return (self.role,)

    def rows(self, interp):
        return inverse_rows(_role_rows(self.role, interp))

    def sexpr(self):
        return f"(inverse {self.role.sexpr()})"


@dataclass(frozen=True)
class TransitiveClosure(RoleExpr):
    role: RoleExpr

    def children(self):
        return (self.role,)

    def rows(self, interp):
        return closure_rows(_role_rows(self.role, interp))

    def sexpr(self):
        return f"(plus {self.role.sexpr()})"


def inverse_rows(rows: Rows) -> Rows:
    result = [0] * len(rows)
    for i, row in enumerate(rows):
        j = 0
        while row:
            if row & 1:
                result[j] |= 1 << i
            row >>= 1
            j += 1
    return tuple(result)


def closure_rows(rows: Rows) -> Rows:
    """Warshall 传递闭包"""
    result = list(rows)
    for k in range(len(result)):
        bit = 1 << k
        row_k = result[k]
        for i in range(len(result)):
            if result[i] & bit:
                result[i] |= row_k
    return tuple(result)


# ---- 概念表达式 ----

class ConceptExpr:
    """概念表达式基类"""

    def mask(self, interp: Interpretation) -> int:
        raise NotImplementedError

    @property
    def complexity(self) -> int:
        return 1 + sum(child.complexity for child in self.children())

    @property
    def depth(self) -> int:
        children = self.children()
        return 1 + max(child.depth for child in children) if children else 0

    def children(self) -> Tuple[Any, ...]:
        return ()

    def __str__(self) -> str:
        return self.sexpr()

    def sexpr(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Top(ConceptExpr):
    def mask(self, interp):
        return interp.full

    def sexpr(self):
        return "top"


@dataclass(frozen=True)
class Bottom(ConceptExpr):
    def mask(self, interp):
        return 0

    def sexpr(self):
        return "bottom"


@dataclass(frozen=True)
class PrimitiveConcept(ConceptExpr):
    """谓词第 position 个参数位置上的投影"""
    predicate: str
    position: int = 0

    def mask(self, interp):
        return interp.unary.get((self.predicate, self.position), 0)

    def sexpr(self):
        return f"(atom {self.predicate} {self.position})"


@dataclass(frozen=True)
class GoalPrimitiveConcept(ConceptExpr):
    predicate: str
    position: int = 0

    def mask(self, interp):
        return interp.unary.get((self.predicate + GOAL_SUFFIX, self.position), 0)

    def sexpr(self):
        return f"(goal-atom {self.predicate} {self.position})"


@dataclass(frozen=True)
class NullaryAtom(ConceptExpr):
    """零元谓词成立时为全体对象，否则为空集；作特征时按布尔取值"""
    predicate: str

    def mask(self, interp):
        return interp.full if self.predicate in interp.nullary else 0

    def sexpr(self):
        return f"(nullary {self.predicate})"


@dataclass(frozen=True)
class GoalNullaryAtom(ConceptExpr):
    predicate: str

    def mask(self, interp):
        return interp.full if self.predicate + GOAL_SUFFIX in interp.nullary else 0

    def sexpr(self):
        return f"(goal-nullary {self.predicate})"


@dataclass(frozen=True)
class Nominal(ConceptExpr):
    constant: str

    def mask(self, interp):
        if self.constant not in interp.index:
            raise UnknownSymbol(f"状态中不存在常量 {self.constant}")
        return 1 << interp.index[self.constant]

    def sexpr(self):
        return f"(nominal {self.constant})"


@dataclass(frozen=True)
class Not(ConceptExpr):
    concept: ConceptExpr

    def children(self):
        return (self.concept,)

    def mask(self, interp):
        return interp.full & ~_concept_mask(self.concept, interp)

    def sexpr(self):
        return f"(not {self.concept.sexpr()})"


@dataclass(frozen=True)
class And(ConceptExpr):
    left: ConceptExpr
    right: ConceptExpr

    def children(self):
        return (self.left, self.right)

    def mask(self, interp):
        return _concept_mask(self.left, interp) & _concept_mask(self.right, interp)

    def sexpr(self):
        return f"(and {self.left.sexpr()} {self.right.sexpr()})"


@dataclass(frozen=True)
class Exists(ConceptExpr):
    role: RoleExpr
    concept: ConceptExpr

    def children(self):
        return (self.role, self.concept)

    def mask(self, interp):
        return exists_mask(_role_rows(self.role, interp), _concept_mask(self.concept, interp))

    def sexpr(self):
        return f"(exists {self.role.sexpr()} {self.concept.sexpr()})"


@dataclass(frozen=True)
class Forall(ConceptExpr):
    role: RoleExpr
    concept: ConceptExpr

    def children(self):
        return (self.role, self.concept)

    def mask(self, interp):
        return forall_mask(_role_rows(self.role, interp), _concept_mask(self.concept, interp), interp.full)

    def sexpr(self):
        return f"(forall {self.role.sexpr()} {self.concept.sexpr()})"


def exists_mask(rows: Rows, concept: int) -> int:
    result = 0
    for i, row in enumerate(rows):
        if row & concept:
            result |= 1 << i
    return result


def forall_mask(rows: Rows, concept: int, full: int) -> int:
    result = 0
    missing = full & ~concept
    for i, row in enumerate(rows):
        if not row & missing:
            result |= 1 << i
    return result


# 指称缓存，按 (表达式, 解释) 做LRU
_concept_mask = lru_cache(maxsize=65536)(lambda concept, interp: concept.mask(interp))
_role_rows = lru_cache(maxsize=16384)(lambda role, interp: role.rows(interp))


def set_cache_size(size: int):
    """调整指称缓存上限"""
    global _concept_mask, _role_rows
    _concept_mask = lru_cache(maxsize=size)(lambda concept, interp: concept.mask(interp))
    _role_rows = lru_cache(maxsize=max(1, size // 4))(lambda role, interp: role.rows(interp))


def _memo_rows(role: RoleExpr, interp: Interpretation, memo: Dict[int, Any]) -> Rows:
    rows = memo.get(id(role))
    if rows is None:
        if isinstance(role, InverseRole):
            rows = inverse_rows(_memo_rows(role.role, interp, memo))
        elif isinstance(role, TransitiveClosure):
            rows = closure_rows(_memo_rows(role.role, interp, memo))
        else:
            rows = role.rows(interp)
        memo[id(role)] = rows
    return rows


def _memo_mask(concept: ConceptExpr, interp: Interpretation, memo: Dict[int, Any]) -> int:
    mask = memo.get(id(concept))
    if mask is None:
        if isinstance(concept, Not):
            mask = interp.full & ~_memo_mask(concept.concept, interp, memo)
        elif isinstance(concept, And):
            mask = _memo_mask(concept.left, interp, memo) & _memo_mask(concept.right, interp, memo)
        elif isinstance(concept, Exists):
            mask = exists_mask(_memo_rows(concept.role, interp, memo), _memo_mask(concept.concept, interp, memo))
        elif isinstance(concept, Forall):
            mask = forall_mask(_memo_rows(concept.role, interp, memo),
                               _memo_mask(concept.concept, interp, memo), interp.full)
        else:
            mask = concept.mask(interp)
        memo[id(concept)] = mask
    return mask


def concept_masks(concepts: Sequence[ConceptExpr], interp: Interpretation) -> List[int]:
    """一次求出同一解释上的多个概念，共享的子表达式只算一次"""
    memo: Dict[int, Any] = {}
    return [_memo_mask(c, interp, memo) for c in concepts]


def eval_concept(concept: ConceptExpr, state: State) -> FrozenSet[str]:
    """概念在状态上的指称（对象名集合）"""
    interp = _interpretations(state)
    return interp.names(_concept_mask(concept, interp))


def eval_role(role: RoleExpr, state: State) -> FrozenSet[Tuple[str, str]]:
    interp = _interpretations(state)
    rows = _role_rows(role, interp)
    return frozenset((interp.objects[i], interp.objects[j])
                     for i, row in enumerate(rows) for j in range(len(rows)) if row >> j & 1)


# ---- 特征 ----

@dataclass(frozen=True)
class Feature:
    """概念 C 定义的特征，取值为 |C(s)|"""
    id: int
    kind: FeatureKind
    concept: ConceptExpr
    complexity: int = 0

    def __post_init__(self):
        if not self.complexity:
            object.__setattr__(self, "complexity", self.concept.complexity)

    @property
    def name(self) -> str:
        return f"f{self.id}"

    @property
    def is_boolean(self) -> bool:
        return self.kind == FeatureKind.BOOLEAN


def eval_feature(feature: Feature, state: State) -> int:
    """特征值；布尔特征截断到 {0,1}"""
    interp = _interpretations(state)
    count = _concept_mask(feature.concept, interp).bit_count()
    return min(count, 1) if feature.is_boolean else count


def bool_value(feature: Feature, state: State) -> int:
    return 1 if eval_feature(feature, state) > 0 else 0


@dataclass
class FeaturePool:
    """按静态顺序排列的特征池"""
    features: Tuple[Feature, ...]
    complexity_bound: int
    depth_bound: int
    sample: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def __getitem__(self, index: int) -> Feature:
        return self.features[index]

    @property
    def costs(self) -> np.ndarray:
        return np.array([f.complexity for f in self.features], dtype=np.int64)

    @property
    def boolean_mask(self) -> np.ndarray:
        return np.array([f.is_boolean for f in self.features], dtype=bool)

    def subset(self, ids: Iterable[int]) -> "FeaturePool":
        """只保留指定特征并重新编号"""
        kept = [self.features[i] for i in ids]
        features = tuple(Feature(i, f.kind, f.concept, f.complexity) for i, f in enumerate(kept))
        return FeaturePool(features, self.complexity_bound, self.depth_bound, dict(self.sample))


class FeatureEvaluator:
    """一组特征在状态上的取值向量，带LRU缓存"""

    def __init__(self, features: Sequence[Feature], cache_size: int = 4096):
        self.features = tuple(features)
        self._boolean = np.array([f.is_boolean for f in self.features], dtype=bool)
        self._concepts = [f.concept for f in self.features]
        self.values = lru_cache(maxsize=cache_size)(self._values)

    def _values(self, state: State) -> np.ndarray:
        interp = _interpretations(state)
        counts = np.fromiter((m.bit_count() for m in concept_masks(self._concepts, interp)),
                             dtype=np.int64, count=len(self.features))
        counts[self._boolean] = np.minimum(counts[self._boolean], 1)
        counts.flags.writeable = False
        return counts

    def matrix(self, states: Sequence[State]) -> np.ndarray:
        if not states:
            return np.zeros((0, len(self.features)), dtype=np.int64)
        return np.vstack([self.values(s) for s in states])


@dataclass(frozen=True)
class FeatureSignature:
    """特征在样本上的签名：每个迁移的 (源值, 目标值) 与每个状态的布尔值"""
    pairs: Tuple[Tuple[int, int], ...]
    booleans: Tuple[int, ...]

    @property
    def s_key(self) -> Tuple[int, ...]:
        return tuple(v for pair in self.pairs for v in pair)

    @property
    def t_key(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((int(s > 0), (t > s) - (t < s)) for s, t in self.pairs)


def sample_states(sample: Sequence[Transition]) -> List[State]:
    seen: Dict[State, None] = {}
    for transition in sample:
        seen.setdefault(transition.source, None)
        seen.setdefault(transition.target, None)
    return list(seen)


def signature(feature: Feature, sample: Sequence[Transition]) -> FeatureSignature:
    pairs = tuple((eval_feature(feature, t.source), eval_feature(feature, t.target)) for t in sample)
    booleans = tuple(bool_value(feature, s) for s in sample_states(sample))
    return FeatureSignature(pairs, booleans)


# ---- 特征池生成 ----

class _Grammar:
    """按复杂度分层生成概念，层内按规范字符串排序，指称相同的后来者丢弃"""

    def __init__(self, domain: DomainSpec, interps: Sequence[Interpretation], depth_bound: int):
        self.domain = domain
        self.interps = interps
        self.depth_bound = depth_bound
        self.concepts: Dict[int, List[Tuple[ConceptExpr, Tuple[int, ...]]]] = {}
        self.roles: Dict[int, List[Tuple[RoleExpr, Tuple[Rows, ...]]]] = {}
        self._seen_concepts: set = set()
        self._seen_roles: set = set()

    def _register_roles(self, level: int, candidates: List[RoleExpr]):
        kept = []
        for role in sorted(set(candidates), key=lambda r: r.sexpr()):
            if role.depth > self.depth_bound:
                continue
            denotation = tuple(role.rows(interp) for interp in self.interps)
            if denotation in self._seen_roles:
                continue
            self._seen_roles.add(denotation)
            kept.append((role, denotation))
        self.roles[level] = kept

    def _register_concepts(self, level: int, candidates: List[Tuple[ConceptExpr, Any]]):
        kept = []
        for concept, compute in sorted(candidates, key=lambda c: c[0].sexpr()):
            if concept.depth > self.depth_bound:
                continue
            denotation = compute()
            if denotation in self._seen_concepts:
                continue
            self._seen_concepts.add(denotation)
            kept.append((concept, denotation))
        self.concepts[level] = kept

    def base(self):
        roles: List[RoleExpr] = []
        concepts: List[ConceptExpr] = [Top(), Bottom()]
        for pred, arg_types in self.domain.predicates:
            if not arg_types:
                concepts.append(NullaryAtom(pred))
                concepts.append(GoalNullaryAtom(pred))
            for pos in range(len(arg_types)):
                concepts.append(PrimitiveConcept(pred, pos))
                concepts.append(GoalPrimitiveConcept(pred, pos))
            if len(arg_types) == 2:
                roles.append(PrimitiveRole(pred))
                roles.append(GoalPrimitiveRole(pred))
        concepts.extend(Nominal(c) for c, _ in self.domain.constants)

        self._register_roles(1, roles)
        self._register_concepts(1, [
            (c, lambda c=c: tuple(_safe_mask(c, interp) for interp in self.interps))
            for c in concepts
        ])

    def grow(self, level: int):
        interps = self.interps
        roles: List[RoleExpr] = []
        for role, _ in self.roles.get(level - 1, []):
            if not isinstance(role, InverseRole):
                roles.append(InverseRole(role))
            if not isinstance(role, TransitiveClosure):
                roles.append(TransitiveClosure(role))
        self._register_roles(level, roles)

        candidates: List[Tuple[ConceptExpr, Any]] = []
        for concept, den in self.concepts.get(level - 1, []):
            if not isinstance(concept, Not):
                candidates.append((Not(concept), lambda den=den: tuple(
                    interp.full & ~m for interp, m in zip(interps, den))))

        for left_level in range(1, level - 1):
            right_level = level - 1 - left_level
            if left_level > right_level:
                break
            lefts = self.concepts.get(left_level, [])
            rights = self.concepts.get(right_level, [])
            for i, (left, lden) in enumerate(lefts):
                start = i + 1 if left_level == right_level else 0
                for right, rden in rights[start:]:
                    a, b = (left, right) if left.sexpr() <= right.sexpr() else (right, left)
                    candidates.append((And(a, b), lambda lden=lden, rden=rden: tuple(
                        x & y for x, y in zip(lden, rden))))

        for role_level in range(1, level - 1):
            concept_level = level - 1 - role_level
            for role, rden in self.roles.get(role_level, []):
                for concept, cden in self.concepts.get(concept_level, []):
                    candidates.append((Exists(role, concept), lambda rden=rden, cden=cden: tuple(
                        exists_mask(rows, m) for rows, m in zip(rden, cden))))
                    candidates.append((Forall(role, concept), lambda rden=rden, cden=cden: tuple(
                        forall_mask(rows, m, interp.full) for rows, m, interp in zip(rden, cden, interps))))

        self._register_concepts(level, candidates)

    def ordered_concepts(self) -> List[Tuple[ConceptExpr, Tuple[int, ...]]]:
        return [entry for level in sorted(self.concepts) for entry in self.concepts[level]]


def _safe_mask(concept: ConceptExpr, interp: Interpretation) -> int:
    # 某些实例中不存在的常量按空集处理
    try:
        return concept.mask(interp)
    except UnknownSymbol:
        return 0


def generate_pool(domain: DomainSpec, sample: Sequence[Transition],
                  complexity_bound: int, depth_bound: int) -> FeaturePool:
    """
    生成有界特征池并剪除冗余特征

    Args:
        domain: 领域描述，提供谓词与常量
        sample: 剪枝样本迁移
        complexity_bound: 概念复杂度上限
        depth_bound: 概念深度上限

    Returns:
        按 (复杂度, 规范字符串) 排序的特征池

    Raises:
        EmptySample: 样本为空
    """
    if not sample:
        raise EmptySample("特征池生成需要至少一个样本迁移")
    if complexity_bound < 1 or depth_bound < 1:
        raise ValueError("复杂度与深度上限必须不小于1")

    states = sample_states(sample)
    index = {s: i for i, s in enumerate(states)}
    interps = [_interpretations(s) for s in states]
    src = np.array([index[t.source] for t in sample], dtype=np.int64)
    dst = np.array([index[t.target] for t in sample], dtype=np.int64)

    grammar = _Grammar(domain, interps, depth_bound)
    grammar.base()
    for level in range(2, complexity_bound + 1):
        grammar.grow(level)
        logger.debug(f"复杂度 {level}: {len(grammar.concepts.get(level, []))} 个新概念")

    features: List[Feature] = []
    seen_s: set = set()
    seen_t: set = set()
    for concept, denotation in grammar.ordered_concepts():
        values = np.fromiter((m.bit_count() for m in denotation), dtype=np.int64, count=len(denotation))
        nullary = isinstance(concept, (NullaryAtom, GoalNullaryAtom))
        if nullary:
            values = np.minimum(values, 1)
        s_key = values.tobytes()
        delta = np.sign(values[dst] - values[src])
        t_key = ((values[src] > 0).tobytes(), delta.tobytes())
        if s_key in seen_s or t_key in seen_t:
            continue
        seen_s.add(s_key)
        seen_t.add(t_key)
        kind = FeatureKind.BOOLEAN if nullary or values.max(initial=0) <= 1 else FeatureKind.NUMERICAL
        features.append(Feature(len(features), kind, concept))

    instances = sorted({s.instance for s in states})
    logger.info(f"特征池: {len(features)} 个特征（复杂度≤{complexity_bound}，深度≤{depth_bound}，"
                f"样本 {len(states)} 个状态 / {len(sample)} 个迁移）")
    return FeaturePool(tuple(features), complexity_bound, depth_bound,
                       {"states": len(states), "transitions": len(sample), "instances": instances})


# ---- 序列化 ----

def _parse_role(node) -> RoleExpr:
    if not isinstance(node, SExpr) or len(node.items) != 2:
        raise _bad(node, "无效的角色表达式")
    head, arg = node.head(), node.items[1]
    if head == "role" and isinstance(arg, Token):
        return PrimitiveRole(arg.text)
    if head == "goal-role" and isinstance(arg, Token):
        return GoalPrimitiveRole(arg.text)
    if head == "inverse":
        return InverseRole(_parse_role(arg))
    if head == "plus":
        return TransitiveClosure(_parse_role(arg))
    raise _bad(node, f"未知的角色构造 {head}")


def _bad(node, message: str) -> PddlParseError:
    return PddlParseError(ParseDiagnostic("<concept>", node.line, node.column, message))


def _parse_concept(node) -> ConceptExpr:
    if isinstance(node, Token):
        if node.text == "top":
            return Top()
        if node.text == "bottom":
            return Bottom()
        raise _bad(node, f"未知的概念 {node.text}")
    head = node.head()
    items = node.items
    if head in ("atom", "goal-atom") and len(items) == 3 and all(isinstance(i, Token) for i in items[1:]):
        if not items[2].text.isdigit():
            raise _bad(items[2], "参数位置必须是自然数")
        cls = PrimitiveConcept if head == "atom" else GoalPrimitiveConcept
        return cls(items[1].text, int(items[2].text))
    if head == "nominal" and len(items) == 2 and isinstance(items[1], Token):
        return Nominal(items[1].text)
    if head in ("nullary", "goal-nullary") and len(items) == 2 and isinstance(items[1], Token):
        return (NullaryAtom if head == "nullary" else GoalNullaryAtom)(items[1].text)
    if head == "not" and len(items) == 2:
        return Not(_parse_concept(items[1]))
    if head == "and" and len(items) == 3:
        return And(_parse_concept(items[1]), _parse_concept(items[2]))
    if head in ("exists", "forall") and len(items) == 3:
        cls = Exists if head == "exists" else Forall
        return cls(_parse_role(items[1]), _parse_concept(items[2]))
    raise _bad(node, f"无效的概念表达式 {head}")


def parse_concept(text: str) -> ConceptExpr:
    """解析规范s表达式形式的概念"""
    return _parse_concept(parse_sexpr(text, "<concept>"))


def pool_to_json(pool: FeaturePool) -> List[Dict[str, Any]]:
    return [{"id": f.id, "kind": f.kind.value, "concept": f.concept.sexpr(), "complexity": f.complexity}
            for f in pool.features]


def pool_from_json(data: List[Dict[str, Any]]) -> FeaturePool:
    features = tuple(Feature(int(entry["id"]), FeatureKind(entry["kind"]), parse_concept(entry["concept"]),
                             int(entry.get("complexity", 0)))
                     for entry in data)
    for i, f in enumerate(features):
        if f.id != i:
            raise ValueError(f"特征编号应连续，位置 {i} 处为 {f.id}")
    complexity = max((f.complexity for f in features), default=1)
    depth = max((f.concept.depth for f in features), default=1)
    return FeaturePool(features, complexity, max(depth, 1))


def save_pool(pool: FeaturePool, path: Union[str, Path]):
    Path(path).write_text(json.dumps(pool_to_json(pool), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_pool(path: Union[str, Path]) -> FeaturePool:
    return pool_from_json(json.loads(Path(path).read_text(encoding="utf-8")))
