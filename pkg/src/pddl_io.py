"""
PDDL读写模块
解析STRIPS+typing子集的领域与问题文件，并提供格式化输出
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from logger import get_logger
from strips_model import (
    ROOT_TYPE, GOAL_SUFFIX, ActionSchema, Atom, DomainSpec, GroundAction,
    InstanceSpec, Literal, PddlTypeError, check_instance, format_atom,
)

logger = get_logger()

SUPPORTED_REQUIREMENTS = (
    ":strips", ":typing", ":negative-preconditions", ":constants", ":equality",
)


@dataclass(frozen=True)
class ParseDiagnostic:
    """带位置的解析诊断信息"""
    file: str
    line: int
    column: int
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}: {self.severity}: {self.message}"


class PddlParseError(Exception):
    """PDDL语法或结构错误"""

    def __init__(self, diagnostic: ParseDiagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


class UnsupportedRequirement(PddlParseError):
    """使用了不支持的 :requirements"""

    def __init__(self, requirement: str, diagnostic: ParseDiagnostic):
        super().__init__(diagnostic)
        self.requirement = requirement


@dataclass
class Token:
    text: str
    line: int
    column: int


@dataclass
class SExpr:
    """带位置的括号表达式"""
    items: List[Union["SExpr", Token]]
    line: int
    column: int

    def head(self) -> Optional[str]:
        if self.items and isinstance(self.items[0], Token):
            return self.items[0].text
        return None


Node = Union[SExpr, Token]


class _Reader:
    """把文本切分成带位置的括号树"""

    def __init__(self, text: str, filename: str):
        self.text = text
        self.filename = filename

    def fail(self, line: int, column: int, message: str):
        raise PddlParseError(ParseDiagnostic(self.filename, line, column, message))

    def tokens(self) -> Iterable[Token]:
        line, column = 1, 1
        i, n = 0, len(self.text)
        text = self.text
        while i < n:
            ch = text[i]
            if ch == "\n":
                line, column = line + 1, 1
                i += 1
            elif ch.isspace():
                column += 1
                i += 1
            elif ch == ";":
                while i < n and text[i] != "\n":
                    i += 1
            elif ch in "()":
                yield Token(ch, line, column)
                column += 1
                i += 1
            else:
                start = i
                while i < n and not text[i].isspace() and text[i] not in "();":
                    i += 1
                yield Token(text[start:i].lower(), line, column)
                column += i - start

    def read(self) -> List[Node]:
        """迭代建树，避免深层嵌套导致递归溢出"""
        stack: List[SExpr] = []
        roots: List[Node] = []
        last = Token("", 1, 1)
        for token in self.tokens():
            last = token
            if token.text == "(":
                stack.append(SExpr([], token.line, token.column))
            elif token.text == ")":
                if not stack:
                    self.fail(token.line, token.column, "多余的右括号")
                node = stack.pop()
                (stack[-1].items if stack else roots).append(node)
            else:
                (stack[-1].items if stack else roots).append(token)
        if stack:
            opened = stack[-1]
            self.fail(opened.line, opened.column, "括号未闭合")
        if not roots:
            self.fail(last.line, last.column, "输入为空")
        return roots


class _Parser:
    """领域与问题结构解析"""

    def __init__(self, text: Union[str, bytes], filename: str):
        self.filename = filename
        if isinstance(text, bytes):
            try:
                text = text.decode("utf-8")
            except UnicodeDecodeError as e:
                raise PddlParseError(ParseDiagnostic(filename, 1, 1, f"不是有效的UTF-8: {e.reason}"))
        self.reader = _Reader(text, filename)

    # ---- 通用工具 ----

    def fail(self, node: Node, message: str):
        raise PddlParseError(ParseDiagnostic(self.filename, node.line, node.column, message))

    def expect_list(self, node: Node, what: str) -> SExpr:
        if not isinstance(node, SExpr):
            self.fail(node, f"{what} 应为括号表达式")
        return node

    def expect_symbol(self, node: Node, what: str) -> str:
        if not isinstance(node, Token):
            self.fail(node, f"{what} 应为标识符")
        return node.text

    def define_block(self, kind: str) -> Tuple[str, List[Node], SExpr]:
        roots = self.reader.read()
        if len(roots) != 1:
            self.fail(roots[1], "文件中只能有一个 define")
        root = self.expect_list(roots[0], "顶层")
        if root.head() != "define" or len(root.items) < 2:
            self.fail(root, "顶层应为 (define ...)")
        header = self.expect_list(root.items[1], f"({kind} 名称)")
        if header.head() != kind or len(header.items) != 2:
            self.fail(header, f"应为 ({kind} 名称)")
        name = self.expect_symbol(header.items[1], f"{kind} 名称")
        return name, root.items[2:], root

    def typed_list(self, node: SExpr, items: Sequence[Node], variables: bool) -> List[Tuple[Node, str, str]]:
        """解析 `a b - t c` 形式的类型列表"""
        result: List[Tuple[Node, str, str]] = []
        pending: List[Token] = []
        i = 0
        while i < len(items):
            item = items[i]
            if not isinstance(item, Token):
                self.fail(item, "类型列表中不允许嵌套表达式（不支持 either）")
            if item.text == "-":
                if i + 1 >= len(items) or not isinstance(items[i + 1], Token):
                    self.fail(item, "'-' 之后缺少类型名")
                if not pending:
                    self.fail(item, "'-' 之前缺少名称")
                type_name = items[i + 1].text
                result.extend((tok, tok.text, type_name) for tok in pending)
                pending = []
                i += 2
                continue
            if variables != item.text.startswith("?"):
                self.fail(item, f"{'应为变量' if variables else '不应为变量'}: {item.text}")
            pending.append(item)
            i += 1
        result.extend((tok, tok.text, ROOT_TYPE) for tok in pending)
        return result

    # ---- 领域 ----

    def parse_domain(self) -> DomainSpec:
        name, sections, _ = self.define_block("domain")
        requirements: List[str] = []
        types: List[Tuple[str, str]] = []
        constants: List[Tuple[str, str]] = []
        predicates: Dict[str, Tuple[str, ...]] = {}
        schemas: List[ActionSchema] = []
        declared_types = {ROOT_TYPE}

        for section in sections:
            section = self.expect_list(section, "领域段")
            head = section.head()
            body = section.items[1:]
            if head == ":requirements":
                for item in body:
                    req = self.expect_symbol(item, "requirement")
                    if req not in SUPPORTED_REQUIREMENTS:
                        raise UnsupportedRequirement(req, ParseDiagnostic(
                            self.filename, item.line, item.column, f"不支持的 requirement {req}"))
                    requirements.append(req)
            elif head == ":types":
                for tok, type_name, parent in self.typed_list(section, body, variables=False):
                    if type_name == ROOT_TYPE:
                        continue
                    if type_name in declared_types:
                        self.fail(tok, f"类型 {type_name} 重复声明")
                    declared_types.add(type_name)
                    types.append((type_name, parent))
                for tok, type_name, parent in self.typed_list(section, body, variables=False):
                    if parent not in declared_types:
                        self.fail(tok, f"父类型 {parent} 未声明")
            elif head == ":constants":
                for tok, const, type_name in self.typed_list(section, body, variables=False):
                    if type_name not in declared_types:
                        self.fail(tok, f"常量 {const} 的类型 {type_name} 未声明")
                    if any(const == c for c, _ in constants):
                        self.fail(tok, f"常量 {const} 重复声明")
                    constants.append((const, type_name))
            elif head == ":predicates":
                for decl in body:
                    decl = self.expect_list(decl, "谓词声明")
                    if not decl.items:
                        self.fail(decl, "空谓词声明")
                    pred = self.expect_symbol(decl.items[0], "谓词名")
                    if pred in predicates:
                        self.fail(decl, f"谓词 {pred} 重复声明")
                    if pred.endswith(GOAL_SUFFIX):
                        self.fail(decl, f"谓词名后缀 {GOAL_SUFFIX} 保留给目标谓词: {pred}")
                    if pred == "=":
                        self.fail(decl, "不能声明相等谓词")
                    params = self.typed_list(decl, decl.items[1:], variables=True)
                    for tok, _, type_name in params:
                        if type_name not in declared_types:
                            self.fail(tok, f"类型 {type_name} 未声明")
                    predicates[pred] = tuple(t for _, _, t in params)
            elif head == ":action":
                schemas.append(self.parse_action(section, predicates, dict(constants), types, declared_types))
            else:
                self.fail(section, f"不支持的领域段 {head}")

        names = [s.name for s in schemas]
        if len(set(names)) != len(names):
            self.fail(sections[-1], "动作名重复")

        return DomainSpec(name=name, requirements=tuple(requirements), types=tuple(types),
                          constants=tuple(constants), predicates=tuple(predicates.items()),
                          schemas=tuple(schemas))

    def parse_action(self, section: SExpr, predicates: Dict[str, Tuple[str, ...]],
                     constants: Dict[str, str], types: List[Tuple[str, str]],
                     declared_types: set) -> ActionSchema:
        if len(section.items) < 2:
            self.fail(section, "动作缺少名称")
        name = self.expect_symbol(section.items[1], "动作名")
        fields: Dict[str, Node] = {}
        rest = section.items[2:]
        if len(rest) % 2:
            self.fail(section, f"动作 {name} 的键值对不完整")
        for key, value in zip(rest[0::2], rest[1::2]):
            key_text = self.expect_symbol(key, "动作字段")
            if key_text not in (":parameters", ":precondition", ":effect"):
                self.fail(key, f"不支持的动作字段 {key_text}")
            if key_text in fields:
                self.fail(key, f"动作字段 {key_text} 重复")
            fields[key_text] = value

        parameters: List[Tuple[str, str]] = []
        if ":parameters" in fields:
            plist = self.expect_list(fields[":parameters"], ":parameters")
            for tok, var, type_name in self.typed_list(plist, plist.items, variables=True):
                if type_name not in declared_types:
                    self.fail(tok, f"类型 {type_name} 未声明")
                if any(var == v for v, _ in parameters):
                    self.fail(tok, f"参数 {var} 重复")
                parameters.append((var, type_name))

        scope = dict(parameters)
        scope.update(constants)
        parents = {ROOT_TYPE: ""}
        parents.update(dict(types))

        def is_subtype(t: str, ancestor: str) -> bool:
            seen = set()
            while t and t not in seen:
                if t == ancestor:
                    return True
                seen.add(t)
                t = parents.get(t, "")
            return False

        def atom(node: Node, allow_equality: bool) -> Tuple[str, Tuple[str, ...]]:
            node = self.expect_list(node, "原子")
            if not node.items:
                self.fail(node, "空原子")
            pred = self.expect_symbol(node.items[0], "谓词名")
            args = tuple(self.expect_symbol(a, "参数") for a in node.items[1:])
            for a, tok in zip(args, node.items[1:]):
                if a not in scope:
                    self.fail(tok, f"动作 {name} 中的项 {a} 既不是参数也不是常量")
            if pred == "=":
                if not allow_equality or len(args) != 2:
                    self.fail(node, "相等文字只能出现在前提中，且恰有两个参数")
                return pred, args
            signature = predicates.get(pred)
            if signature is None:
                self.fail(node, f"谓词 {pred} 未声明")
            if len(signature) != len(args):
                self.fail(node, f"谓词 {pred} 需要 {len(signature)} 个参数")
            for a, expected, tok in zip(args, signature, node.items[1:]):
                if not is_subtype(scope[a], expected):
                    self.fail(tok, f"项 {a} 的类型 {scope[a]} 与谓词 {pred} 的参数类型 {expected} 不符")
            return pred, args

        def literals(node: Node, allow_equality: bool) -> List[Literal]:
            node = self.expect_list(node, "公式")
            if not node.items:
                return []
            if node.head() == "and":
                result: List[Literal] = []
                for child in node.items[1:]:
                    child = self.expect_list(child, "合取项")
                    if child.head() == "and":
                        self.fail(child, "不支持嵌套的 and")
                    result.extend(literals(child, allow_equality))
                return result
            if node.head() == "not":
                if len(node.items) != 2:
                    self.fail(node, "not 只能有一个参数")
                pred, args = atom(node.items[1], allow_equality)
                return [Literal(pred, args, positive=False)]
            if node.head() in ("or", "imply", "exists", "forall", "when"):
                self.fail(node, f"不支持的公式构造 {node.head()}")
            pred, args = atom(node, allow_equality)
            return [Literal(pred, args)]

        precondition: Tuple[Literal, ...] = ()
        if ":precondition" in fields:
            precondition = tuple(literals(fields[":precondition"], allow_equality=True))
        add_effects: List[Atom] = []
        del_effects: List[Atom] = []
        if ":effect" in fields:
            for lit in literals(fields[":effect"], allow_equality=False):
                target = add_effects if lit.positive else del_effects
                target.append((lit.predicate,) + lit.args)

        return ActionSchema(name=name, parameters=tuple(parameters), precondition=precondition,
                            add_effects=tuple(add_effects), del_effects=tuple(del_effects))

    # ---- 问题 ----

    def parse_problem(self, domain: DomainSpec) -> InstanceSpec:
        name, sections, _ = self.define_block("problem")
        objects: List[Tuple[str, str]] = []
        init: List[Atom] = []
        goal: List[Atom] = []

        def ground_atom(node: Node) -> Atom:
            node = self.expect_list(node, "地面原子")
            if not node.items:
                self.fail(node, "空原子")
            return tuple(self.expect_symbol(item, "原子成分") for item in node.items)

        for section in sections:
            section = self.expect_list(section, "问题段")
            head = section.head()
            body = section.items[1:]
            if head == ":domain":
                if len(body) != 1:
                    self.fail(section, "(:domain 名称) 格式错误")
                domain_name = self.expect_symbol(body[0], "领域名")
                if domain_name != domain.name:
                    logger.warning(f"{self.filename}: 问题声明的领域 {domain_name} 与 {domain.name} 不一致")
            elif head == ":objects":
                for tok, obj, type_name in self.typed_list(section, body, variables=False):
                    if any(obj == o for o, _ in objects):
                        self.fail(tok, f"对象 {obj} 重复声明")
                    objects.append((obj, type_name))
            elif head == ":init":
                for item in body:
                    item_list = self.expect_list(item, "初始原子")
                    if item_list.head() == "not":
                        self.fail(item_list, "初始状态不允许否定原子")
                    init.append(ground_atom(item_list))
            elif head == ":goal":
                if len(body) != 1:
                    self.fail(section, "(:goal 公式) 格式错误")
                formula = self.expect_list(body[0], "目标公式")
                conjuncts = formula.items[1:] if formula.head() == "and" else ([formula] if formula.items else [])
                for item in conjuncts:
                    item_list = self.expect_list(item, "目标原子")
                    if item_list.head() in ("not", "or", "and", "exists", "forall", "imply"):
                        self.fail(item_list, "目标只能是正原子的合取")
                    goal.append(ground_atom(item_list))
            else:
                self.fail(section, f"不支持的问题段 {head}")

        instance = InstanceSpec(name=name, domain=domain, objects=tuple(objects),
                                init=frozenset(init), goal=frozenset(goal))
        check_instance(instance)
        return instance


def _guarded(parse, filename: str):
    """把意外异常转换为诊断信息，保证任意输入都不会崩溃"""
    try:
        return parse()
    except (PddlParseError, PddlTypeError):
        raise
    except (RecursionError, ValueError, IndexError, KeyError, AttributeError, TypeError) as e:
        raise PddlParseError(ParseDiagnostic(filename, 1, 1, f"无法解析的输入: {type(e).__name__}")) from e


def parse_domain(text: Union[str, bytes], filename: str = "<domain>") -> DomainSpec:
    """
    解析领域文本

    Raises:
        PddlParseError: 语法或结构错误，携带 ParseDiagnostic
        UnsupportedRequirement: 使用了子集外的 requirement
    """
    return _guarded(lambda: _Parser(text, filename).parse_domain(), filename)


def parse_problem(text: Union[str, bytes], domain: DomainSpec, filename: str = "<problem>") -> InstanceSpec:
    """
    解析问题文本

    Raises:
        PddlParseError: 语法或结构错误
        PddlTypeError: 原子与谓词或对象类型不符
    """
    return _guarded(lambda: _Parser(text, filename).parse_problem(domain), filename)


def parse_sexpr(text: str, filename: str = "<sexpr>") -> Node:
    """读取单个括号表达式（特征概念等也使用该语法）"""
    roots = _Reader(text, filename).read()
    if len(roots) != 1:
        node = roots[1]
        raise PddlParseError(ParseDiagnostic(filename, node.line, node.column, "只允许一个表达式"))
    return roots[0]


def read_domain(path: Union[str, Path]) -> DomainSpec:
    path = Path(path)
    return parse_domain(path.read_bytes(), str(path))


def read_problem(path: Union[str, Path], domain: DomainSpec) -> InstanceSpec:
    path = Path(path)
    return parse_problem(path.read_bytes(), domain, str(path))


# ---- 格式化输出 ----

def _typed(entries: Sequence[Tuple[str, str]]) -> str:
    return " ".join(f"{name} - {type_name}" for name, type_name in entries)


def _literal(lit: Literal) -> str:
    text = "(" + " ".join((lit.predicate,) + lit.args) + ")"
    return text if lit.positive else f"(not {text})"


def format_domain(domain: DomainSpec) -> str:
    """把领域格式化为可重新解析的PDDL文本"""
    lines = [f"(define (domain {domain.name})"]
    if domain.requirements:
        lines.append(f"  (:requirements {' '.join(domain.requirements)})")
    if domain.types:
        lines.append(f"  (:types {_typed(domain.types)})")
    if domain.constants:
        lines.append(f"  (:constants {_typed(domain.constants)})")
    if domain.predicates:
        lines.append("  (:predicates")
        for pred, arg_types in domain.predicates:
            params = _typed([(f"?x{i}", t) for i, t in enumerate(arg_types)])
            lines.append(f"    ({pred}{' ' + params if params else ''})")
        lines.append("  )")
    for schema in domain.schemas:
        lines.append(f"  (:action {schema.name}")
        lines.append(f"    :parameters ({_typed(schema.parameters)})")
        lines.append(f"    :precondition (and {' '.join(_literal(l) for l in schema.precondition)})")
        effects = [format_atom(a) for a in schema.add_effects]
        effects += [f"(not {format_atom(a)})" for a in schema.del_effects]
        lines.append(f"    :effect (and {' '.join(effects)}))")
    lines.append(")")
    return "\n".join(lines) + "\n"


def format_problem(instance: InstanceSpec) -> str:
    """把实例格式化为可重新解析的PDDL文本"""
    lines = [f"(define (problem {instance.name})",
             f"  (:domain {instance.domain.name})"]
    if instance.objects:
        lines.append(f"  (:objects {_typed(instance.objects)})")
    lines.append("  (:init")
    lines.extend(f"    {format_atom(a)}" for a in sorted(instance.init))
    lines.append("  )")
    lines.append(f"  (:goal (and {' '.join(format_atom(a) for a in sorted(instance.goal))}))")
    lines.append(")")
    return "\n".join(lines) + "\n"


def format_plan(actions: Iterable[GroundAction]) -> str:
    """规划导出：每行一个地面动作"""
    return "".join(action.name + "\n" for action in actions)
