"""
运行配置
从环境变量（前缀 PHONON_DD_）和 .env 文件读取，例如：
    PHONON_DD_WORKERS=4
    PHONON_DD_DT_MAX_US=0.01
"""
import os
from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """全局配置"""

    model_config = SettingsConfigDict(
        env_prefix="PHONON_DD_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    workers: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1, description="τ 网格并行计算的线程数")
    dt_max_us: float = Field(0.01, gt=0, description="RK4 最大步长（微秒），默认 10 ns")
    output_dir: str = Field("results", description="CSV 与运行清单的默认输出目录")
    log_level: str = Field("INFO", description="日志级别")
    host: str = Field("0.0.0.0", description="API 服务监听地址")
    port: int = Field(8000, description="API 服务端口")


@lru_cache
def get_settings() -> Settings:
    """获取配置单例"""
    return Settings()
