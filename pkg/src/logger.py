"""
日志工具模块
控制台日志写到标准错误，标准输出只留给命令结果；完整的调试日志按日期写入文件
"""

import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional, Union


LOG_NAME = "stratlearn"
DEFAULT_LOG_DIR = Path.home() / ".stratlearn" / "logs"

CONSOLE_FORMAT = '%(asctime)s [%(levelname)s] %(message)s'
FILE_FORMAT = '%(asctime)s [%(levelname)s] %(name)s - %(funcName)s:%(lineno)d - %(message)s'


def parse_level(level: Union[int, str]) -> int:
    """把 "debug"、"INFO" 之类的名字转成 logging 级别，无法识别时取 INFO"""
    if isinstance(level, int):
        return level
    value = logging.getLevelName(level.upper())
    return value if isinstance(value, int) else logging.INFO


class Logger:
    """stratlearn 的日志工具类"""

    def __init__(self, name: str = LOG_NAME, log_dir: Optional[Path] = None):
        """
        初始化日志

        Args:
            name: logging 中的记录器名称
            log_dir: 日志文件目录，默认为 ~/.stratlearn/logs
        """
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.DEBUG)
        self.console: Optional[logging.Handler] = None
        self.log_file: Optional[Path] = None

        # 同名记录器只挂一次处理器
        if self.logger.handlers:
            self.console = next((h for h in self.logger.handlers if type(h) is logging.StreamHandler), None)
        else:
            self._attach_console()
            self._attach_file(log_dir or DEFAULT_LOG_DIR)

    def _attach_console(self):
        console = logging.StreamHandler(sys.stderr)
        console.setLevel(logging.INFO)
        console.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt='%H:%M:%S'))
        self.logger.addHandler(console)
        self.console = console

    def _attach_file(self, log_dir: Path):
        try:
            log_dir.mkdir(parents=True, exist_ok=True)
            log_file = log_dir / f"{self.logger.name}_{datetime.now().strftime('%Y%m%d')}.log"
            handler = logging.FileHandler(log_file, encoding='utf-8')
        except OSError as e:
            self.logger.warning(f"无法创建日志文件，仅输出到控制台: {e}")
            return
        handler.setLevel(logging.DEBUG)
        handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt='%Y-%m-%d %H:%M:%S'))
        self.logger.addHandler(handler)
        self.log_file = log_file

    def set_level(self, level: Union[int, str]):
        """调整控制台级别，文件日志始终记录 DEBUG"""
        if self.console is not None:
            self.console.setLevel(parse_level(level))

    def debug(self, message: str):
        self.logger.debug(message, stacklevel=2)

    def info(self, message: str):
        self.logger.info(message, stacklevel=2)

    def warning(self, message: str):
        self.logger.warning(message, stacklevel=2)

    def error(self, message: str):
        self.logger.error(message, stacklevel=2)

    def exception(self, message: str):
        """输出异常信息（包含堆栈跟踪）"""
        self.logger.exception(message, stacklevel=2)


# 全局日志实例
_logger = None


def get_logger() -> Logger:
    """获取全局日志实例"""
    global _logger
    if _logger is None:
        _logger = Logger()
    return _logger


def set_level(level: Union[int, str]):
    """调整全局控制台日志级别"""
    get_logger().set_level(level)
