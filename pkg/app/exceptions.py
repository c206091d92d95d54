"""
模拟器异常定义
所有业务异常都继承 SimulationError，路由层与命令行据此转换为 HTTP 状态码 / 退出码
"""


class SimulationError(Exception):
    """模拟器异常基类"""


class InvalidDimensionError(SimulationError, ValueError):
    """Fock 截断维度或离子数不合法"""


class OperatorValidationError(SimulationError, ValueError):
    """算符不满足声明的性质（厄米、幺正、投影）或维度不匹配"""


class StateValidationError(SimulationError, ValueError):
    """量子态不满足归一化 / 厄米 / 正定约束"""


class SiteRangeError(SimulationError, IndexError):
    """离子编号越界"""


class IntegrationAccuracyError(SimulationError, ValueError):
    """RK4 积分精度不足（迹漂移或矩阵元发散），需减小 dt_max"""


class ScheduleRangeError(SimulationError, ValueError):
    """采样时间超出时序总时长"""


class ScheduleConflictError(SimulationError, ValueError):
    """同一离子上的脉冲在时间上重叠"""


class ScenarioValidationError(SimulationError, ValueError):
    """场景不满足不变量；invariant 字段给出失败的不变量名称"""

    def __init__(self, invariant: str, message: str):
        self.invariant = invariant
        super().__init__(f"[{invariant}] {message}")


class UnknownPresetError(SimulationError, KeyError):
    """未知的预设场景名称"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown preset"


class CalibrationError(SimulationError, ValueError):
    """去相位速率校准失败（目标超出可建模范围）"""


class FockCutoffError(SimulationError, ValueError):
    """截断边界能级上的布居超过容差，需增大 fock_cutoff"""


class ScenarioParseError(SimulationError, ValueError):
    """场景文件无法解析；diagnostics 列出行号或字段路径"""

    def __init__(self, source: str, diagnostics: list):
        self.source = source
        self.diagnostics = list(diagnostics)
        super().__init__(f"{source}: " + "; ".join(self.diagnostics))
