"""
命令行模块
规划、特征池生成、策略学习、验证、有效宽度评估、基准生成和配置维护的命令行入口

退出码：0 成功，1 用法或输入错误，2 无解或学习失败，3 预算或超时，4 内部错误，5 策略用尽
"""

import argparse
import glob
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

from config_manager import ConfigError, ConfigManager, get_config_manager
from domains import DOMAINS, generate
from features import EmptySample, UnknownSymbol, generate_pool, load_pool, save_pool, set_cache_size
from logger import get_logger, set_level
from pddl_io import PddlParseError, UnsupportedRequirement, format_plan, read_domain, read_problem
from planner import Budget, BudgetExceeded, Planner
from policy import analyze, effective_width, format_policy, load_policy, save_policy
from report import format_table, format_verdicts, format_widths, save_report
from strips_model import InstanceSpec, PddlTypeError
from wrapper import FailureReason, TrainingSet, WrapperConfig, WrapperFailure, collect_sample, run_wrapper

logger = get_logger()

T = TypeVar("T")
R = TypeVar("R")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2
EXIT_BUDGET = 3
EXIT_INTERNAL = 4
EXIT_EXHAUSTED = 5

_FAILURE_CODES = {
    FailureReason.EDGE: EXIT_FAILURE,
    FailureReason.UNHIT: EXIT_FAILURE,
    FailureReason.TIMEOUT: EXIT_BUDGET,
    FailureReason.EXHAUSTED: EXIT_EXHAUSTED,
}


class UsageError(Exception):
    """命令行参数无效"""


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"需要正整数: {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"需要正数: {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stratlearn", description="从小实例学习可分层的一般规划策略")
    parser.add_argument("--config", help="key = value 形式的配置文件")
    parser.add_argument("--config-dir", help="JSON 配置目录，默认 ~/.stratlearn")
    parser.add_argument("--verbose", "-v", action="store_true", help="输出调试日志")
    sub = parser.add_subparsers(dest="command", required=True)

    def budgets(p: argparse.ArgumentParser):
        p.add_argument("--node-budget", type=_positive, help="搜索节点上限")
        p.add_argument("--time-budget", type=_positive_float, help="时间上限（秒）")

    p = sub.add_parser("plan", help="求最短规划")
    p.add_argument("domain")
    p.add_argument("problem")
    p.add_argument("--out", help="规划输出文件，缺省写到标准输出")
    budgets(p)

    p = sub.add_parser("pool", help="生成特征池")
    p.add_argument("domain")
    p.add_argument("problems", nargs="+")
    p.add_argument("--complexity", type=_positive)
    p.add_argument("--depth", type=_positive)
    p.add_argument("--sample", choices=["plans", "reachable"])
    p.add_argument("--out", help="特征池 JSON 输出文件")
    budgets(p)

    p = sub.add_parser("learn", help="学习一般策略")
    p.add_argument("domain")
    p.add_argument("problems", nargs="*")
    p.add_argument("--pool", help="已有的特征池 JSON")
    p.add_argument("--complexity", type=_positive)
    p.add_argument("--depth", type=_positive)
    p.add_argument("--sample", choices=["plans", "reachable"])
    p.add_argument("--k", type=_positive)
    p.add_argument("--strategy", choices=["s1", "s2", "auto"])
    p.add_argument("--simplify", action="store_true", default=None)
    p.add_argument("--jobs", type=_positive)
    p.add_argument("--out", help="策略 JSON 输出文件")
    p.add_argument("--report", help="学习报告 JSON 输出文件")
    p.add_argument("--trace", help="最后一次 GenEx 调用的跟踪 JSON")
    budgets(p)

    p = sub.add_parser("verify", help="在实例上验证策略")
    p.add_argument("domain")
    p.add_argument("problems", nargs="+")
    p.add_argument("--policy", required=True)
    p.add_argument("--jobs", type=_positive)
    p.add_argument("--node-budget", type=_positive)

    p = sub.add_parser("width", help="评估策略的有效宽度")
    p.add_argument("domain")
    p.add_argument("problems", nargs="+")
    p.add_argument("--policy", required=True)
    p.add_argument("--k-max", type=int)
    p.add_argument("--jobs", type=_positive)
    p.add_argument("--node-budget", type=_positive)

    p = sub.add_parser("generate", help="生成基准领域和问题")
    p.add_argument("name", choices=sorted(DOMAINS))
    p.add_argument("--sizes", type=_positive, nargs="+", required=True)
    p.add_argument("--out", required=True, help="输出目录")

    p = sub.add_parser("config", help="查看或修改 JSON 配置")
    p.add_argument("section", nargs="?", help="只显示这个配置段")
    p.add_argument("--set", nargs="+", metavar="SECTION.OPTION=VALUE", help="写入 JSON 配置文件")
    return parser


# ---- 配置 ----

def _manager(args: argparse.Namespace) -> ConfigManager:
    return ConfigManager(args.config_dir) if args.config_dir else get_config_manager()


def resolve_config(args: argparse.Namespace) -> Dict[str, Any]:
    """默认值 < JSON 配置 < --config 文件 < 命令行参数"""
    manager = _manager(args)
    config = manager.load_config()
    if args.config:
        config = manager.load_key_value(args.config, config)

    def override(section: str, option: str, value):
        if value is not None:
            config[section][option] = value

    command = args.command
    if command in ("plan", "pool", "learn"):
        override("planner", "node_budget", args.node_budget)
    if command in ("plan", "pool"):
        override("planner", "time_budget", args.time_budget)
    if command == "learn":
        override("learner", "time_budget", args.time_budget)
    if command in ("pool", "learn"):
        override("features", "complexity", args.complexity)
        override("features", "depth", args.depth)
        override("features", "sample", args.sample)
    if command == "learn":
        override("learner", "k", args.k)
        override("learner", "strategy", args.strategy)
        override("learner", "simplify", args.simplify)
    if command in ("learn", "verify", "width"):
        override("verify", "jobs", args.jobs)
    if command in ("verify", "width"):
        override("verify", "node_budget", args.node_budget)
    if command == "width":
        override("verify", "width_k", args.k_max)
    return config


def _planner_budget(config: Dict[str, Any]) -> Budget:
    section = config["planner"]
    return Budget(section.get("node_budget") or None, section.get("time_budget") or None)


def _verify_budget(config: Dict[str, Any]) -> Budget:
    return Budget(config["verify"].get("node_budget") or None)


def _expand(patterns: Sequence[str]) -> List[Path]:
    """展开通配符，结果排序去重"""
    paths: Dict[Path, None] = {}
    for pattern in patterns:
        matches = sorted(glob.glob(pattern)) if any(c in pattern for c in "*?[") else [pattern]
        if not matches:
            raise UsageError(f"没有匹配的问题文件: {pattern}")
        for match in matches:
            paths.setdefault(Path(match), None)
    return list(paths)


def _load_problems(domain_path: str, patterns: Sequence[str]):
    domain = read_domain(domain_path)
    problems: List[InstanceSpec] = [read_problem(p, domain) for p in _expand(patterns)]
    return domain, problems


def _load_json(loader: Callable[[str], T], path: str, what: str) -> T:
    """读取特征池或策略文件，内容错误归为输入错误"""
    try:
        return loader(path)
    except (ValueError, KeyError, TypeError) as e:
        raise UsageError(f"{what} {path} 无效: {e}") from e


def _wrapper_config(config: Dict[str, Any]) -> WrapperConfig:
    try:
        wrapper_config = WrapperConfig.from_config(config)
        wrapper_config.strategies()
    except (ValueError, TypeError) as e:
        raise ConfigError(f"学习参数无效: {e}") from e
    return wrapper_config


def _map_jobs(fn: Callable[[Planner], R], planners: Sequence[Planner], jobs: int, policy) -> List[R]:
    """按 verify.jobs 并行执行，结果与输入顺序一致"""
    if jobs <= 1 or len(planners) <= 1:
        return [fn(p) for p in planners]
    # 先在主线程预热特征求值器
    _ = policy.evaluator
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(fn, planners))


# ---- 子命令 ----

def cmd_plan(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    domain = read_domain(args.domain)
    instance = read_problem(args.problem, domain)
    planner = Planner(instance, _planner_budget(config))
    plan = planner.solve()
    if plan is None:
        print(f"{instance.name}: Unsolvable", file=sys.stderr)
        return EXIT_FAILURE
    text = format_plan(plan.actions)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        logger.info(f"规划长度 {len(plan)}，已写入 {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


class _NoSolvable(Exception):
    pass


def _training(problems: Sequence[InstanceSpec], config: Dict[str, Any]) -> TrainingSet:
    if not problems:
        raise UsageError("至少需要一个训练实例")
    try:
        return TrainingSet.build(problems, _planner_budget(config))
    except ValueError:
        raise _NoSolvable() from None


def _make_pool(domain, training: TrainingSet, config: Dict[str, Any]):
    section = config["features"]
    try:
        sample = collect_sample(training, section["sample"])
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return generate_pool(domain, sample, section["complexity"], section["depth"])


def cmd_pool(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    domain, problems = _load_problems(args.domain, args.problems)
    training = _training(problems, config)
    pool = _make_pool(domain, training, config)
    if args.out:
        save_pool(pool, args.out)
        logger.info(f"特征池已写入 {args.out}")
    else:
        print(f"{len(pool)} features")
    return EXIT_OK


def cmd_learn(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    started = time.monotonic()
    domain, problems = _load_problems(args.domain, args.problems) if args.problems else (None, [])
    training = _training(problems, config)
    wrapper_config = _wrapper_config(config)
    pool = _load_json(load_pool, args.pool, "特征池") if args.pool else _make_pool(domain, training, config)
    if len(pool) == 0:
        raise UsageError("特征池为空")
    prep = time.monotonic() - started

    outcome, report = run_wrapper(training, pool, wrapper_config, prep)
    if args.trace and report.genex_trace is not None:
        Path(args.trace).write_text(json.dumps(report.genex_trace, indent=2, ensure_ascii=False) + "\n",
                                    encoding="utf-8")
    if args.report:
        save_report(report, args.report)

    if isinstance(outcome, WrapperFailure):
        sys.stdout.write(format_table([report]))
        print(f"Failure: {outcome.reason.value} {outcome.witness}".rstrip(), file=sys.stderr)
        return _FAILURE_CODES[outcome.reason]

    sys.stdout.write(format_policy(outcome))
    sys.stdout.write(format_table([report]))
    if args.out:
        save_policy(outcome, args.out)
        logger.info(f"策略已写入 {args.out}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    _, problems = _load_problems(args.domain, args.problems)
    policy = _load_json(load_policy, args.policy, "策略")
    planners = [Planner(p, _planner_budget(config)) for p in problems]
    budget = _verify_budget(config)

    def check(planner: Planner):
        try:
            return analyze(policy, planner, budget=budget)
        except BudgetExceeded as e:
            logger.warning(f"{planner.name}: {e}")
            return None

    verdicts = _map_jobs(check, planners, config["verify"]["jobs"], policy)
    sys.stdout.write(format_verdicts([(p.name, v) for p, v in zip(planners, verdicts)]))
    if any(v is None for v in verdicts):
        return EXIT_BUDGET
    return EXIT_OK if all(v.solves for v in verdicts) else EXIT_FAILURE


def cmd_width(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    _, problems = _load_problems(args.domain, args.problems)
    policy = _load_json(load_policy, args.policy, "策略")
    k_max = config["verify"]["width_k"]
    budget = _verify_budget(config)
    planners = [Planner(p, _planner_budget(config)) for p in problems]
    results = _map_jobs(lambda planner: effective_width(policy, planner, k_max, budget),
                        planners, config["verify"]["jobs"], policy)
    sys.stdout.write(format_widths(results))
    return EXIT_OK if all(r.solved for r in results) else EXIT_FAILURE


def cmd_generate(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    try:
        paths = generate(args.name, args.sizes, args.out)
    except ValueError as e:
        raise UsageError(str(e)) from e
    for path in paths:
        print(path)
    return EXIT_OK


def cmd_config(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    """没有 --set 时打印合并后的配置，否则逐项校验后写入 JSON 配置文件"""
    manager = _manager(args)
    if not args.set:
        shown = manager.get_section(args.section, config) if args.section else config
        print(json.dumps(shown, indent=2, ensure_ascii=False))
        return EXIT_OK

    updates: Dict[str, Dict[str, Any]] = {}
    for item in args.set:
        section, option, value = manager.parse_assignment(item)
        updates.setdefault(section, {})[option] = value
    for section, values in updates.items():
        if not manager.update_section(section, values):
            raise UsageError(f"无法写入配置文件 {manager.config_file}")
        logger.info(f"已更新配置段 {section}: {values}")
    return EXIT_OK


COMMANDS = {
    "plan": cmd_plan,
    "pool": cmd_pool,
    "learn": cmd_learn,
    "verify": cmd_verify,
    "width": cmd_width,
    "generate": cmd_generate,
    "config": cmd_config,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        config = resolve_config(args)
    except (ConfigError, OSError) as e:
        print(f"配置错误: {e}", file=sys.stderr)
        return EXIT_USAGE
    set_level(config["logging"]["level"])
    if args.verbose:
        set_level("DEBUG")
    set_cache_size(config["features"]["cache_size"])

    try:
        return COMMANDS[args.command](args, config)
    except (PddlParseError, UnsupportedRequirement) as e:
        print(e, file=sys.stderr)
        logger.error(f"解析失败: {e}")
        return EXIT_USAGE
    except (UsageError, ConfigError, PddlTypeError, UnknownSymbol, EmptySample, OSError) as e:
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_USAGE
    except _NoSolvable:
        print("没有可解的训练实例", file=sys.stderr)
        return EXIT_FAILURE
    except BudgetExceeded as e:
        print(f"预算耗尽: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except Exception as e:
        logger.exception(f"内部错误: {e}")
        print(f"内部错误: {e}", file=sys.stderr)
        return EXIT_INTERNAL
