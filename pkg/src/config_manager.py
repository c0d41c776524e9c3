"""
配置管理模块
负责加载和保存学习、规划与验证的参数
"""

import copy
import json
from pathlib import Path
from typing import Dict, Any, Optional, Tuple, Union

from logger import get_logger

logger = get_logger()


class ConfigError(Exception):
    """配置文件内容无效"""


class ConfigManager:
    """配置管理器"""

    def __init__(self, config_dir: Optional[Union[str, Path]] = None):
        """
        初始化配置管理器

        Args:
            config_dir: 配置文件目录，默认为用户主目录下的.stratlearn
        """
        if config_dir is None:
            self.config_dir = Path.home() / ".stratlearn"
        else:
            self.config_dir = Path(config_dir)

        # 配置文件路径
        self.config_file = self.config_dir / "config.json"

        # 默认配置
        self.default_config = {
            "planner": {
                "node_budget": 200000,
                "time_budget": 60.0
            },
            "features": {
                "complexity": 5,
                "depth": 4,
                "cache_size": 65536,
                "sample": "plans"
            },
            "learner": {
                "k": 1,
                "strategy": "auto",
                "simplify": False,
                "time_budget": 1800.0,
                "max_inner": 500
            },
            "verify": {
                "jobs": 1,
                "node_budget": 500000,
                "width_k": 2
            },
            "logging": {
                "level": "INFO"
            }
        }

    def load_config(self) -> Dict[str, Any]:
        """
        加载配置

        Returns:
            与默认配置深度合并后的配置字典
        """
        merged_config = copy.deepcopy(self.default_config)
        if not self.config_file.exists():
            return merged_config

        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                config = json.load(f)
            # 合并默认配置，确保所有必要的键都存在
            self._deep_update(merged_config, config)
            return merged_config

        except (json.JSONDecodeError, IOError) as e:
            logger.warning(f"加载配置文件失败，使用默认配置: {e}")
            return copy.deepcopy(self.default_config)

    def save_config(self, config: Dict[str, Any]) -> bool:
        """
        保存配置

        Args:
            config: 要保存的配置字典

        Returns:
            保存是否成功
        """
        try:
            self.config_dir.mkdir(parents=True, exist_ok=True)
            with open(self.config_file, 'w', encoding='utf-8') as f:
                json.dump(config, f, indent=2, ensure_ascii=False)
            return True

        except IOError as e:
            logger.error(f"保存配置文件失败: {e}")
            return False

    def get_section(self, name: str, config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        获取某个配置段

        Args:
            name: 配置段名称，如 planner、learner
            config: 已加载的配置，缺省时从文件加载

        Returns:
            配置段字典
        """
        config = config if config is not None else self.load_config()
        if name not in config:
            raise ConfigError(f"未知配置段: {name}")
        return config[name]

    def update_section(self, name: str, values: Dict[str, Any]) -> bool:
        """
        更新某个配置段并保存

        Args:
            name: 配置段名称
            values: 新的取值

        Returns:
            更新是否成功
        """
        config = self.load_config()
        if name not in config:
            return False
        config[name].update(values)
        return self.save_config(config)

    def parse_assignment(self, text: str, where: str = "<命令行>") -> Tuple[str, str, Any]:
        """
        解析一条 `section.option = value`

        Returns:
            (配置段, 配置项, 按默认值类型转换后的值)

        Raises:
            ConfigError: 格式错误、未知配置项或无法转换
        """
        if '=' not in text:
            raise ConfigError(f"{where}: 缺少 '='")
        key, value = (part.strip() for part in text.split('=', 1))
        if '.' not in key:
            raise ConfigError(f"{where}: 键必须是 section.option 形式: {key}")
        section, option = key.split('.', 1)
        defaults = self.default_config.get(section)
        if defaults is None or option not in defaults:
            raise ConfigError(f"{where}: 未知配置项 {key}")
        return section, option, self._coerce(value, defaults[option], where)

    def load_key_value(self, path: Union[str, Path],
                       base: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        读取 `section.option = value` 形式的纯文本配置文件

        Args:
            path: 配置文件路径
            base: 被覆盖的配置，缺省为 load_config() 的结果

        Returns:
            合并后的配置字典
        """
        config = copy.deepcopy(base) if base is not None else self.load_config()
        text = Path(path).read_text(encoding='utf-8')

        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            section, option, value = self.parse_assignment(line, f"{path}:{lineno}")
            config[section][option] = value

        return config

    @staticmethod
    def _coerce(value: str, default: Any, where: str) -> Any:
        """按默认值的类型转换字符串"""
        if isinstance(default, bool):
            lowered = value.lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ConfigError(f"{where}: 无法解析布尔值 {value!r}")
        try:
            if isinstance(default, int):
                return int(value)
            if isinstance(default, float):
                return float(value)
        except ValueError:
            raise ConfigError(f"{where}: 无法解析数值 {value!r}") from None
        return value

    def _deep_update(self, base_dict: Dict, update_dict: Dict):
        """
        深度更新字典

        Args:
            base_dict: 基础字典
            update_dict: 更新字典
        """
        for key, value in update_dict.items():
            if key in base_dict and isinstance(base_dict[key], dict) and isinstance(value, dict):
                self._deep_update(base_dict[key], value)
            else:
                base_dict[key] = value


# 全局配置管理器实例
_config_manager = None


def get_config_manager() -> ConfigManager:
    """
    获取全局配置管理器实例

    Returns:
        配置管理器实例
    """
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager
