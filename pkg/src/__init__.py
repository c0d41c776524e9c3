"""
广义规划分层策略学习工具
"""

__version__ = "0.1.0"
__author__ = "StratLearn Team"
__description__ = "从采样规划中学习可终止（分层）的规则策略"
