"""
局域声子动力学解耦模拟器 - FastAPI主应用
"""
from contextlib import asynccontextmanager

from dotenv import load_dotenv
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

# 加载环境变量
load_dotenv()

from app.config import get_settings
from app.routers import scenario_router
from app.services.presets import PRESET_NAMES, list_presets


@asynccontextmanager
async def lifespan(app: FastAPI):
    """应用生命周期管理：启动时预读全部预设"""
    print("🚀 应用启动中...")
    try:
        list_presets()
        print(f"✅ 已加载 {len(PRESET_NAMES)} 个预设场景")
    except Exception as e:
        print(f"⚠️  警告：预设场景加载失败: {e}")

    yield

    print("🛑 应用关闭中...")


app = FastAPI(
    title="局域声子动力学解耦模拟器API",
    description="囚禁离子局域声子跳跃、动力学解耦脉冲序列与探测的数值模拟",
    version="1.0.0",
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(scenario_router)


@app.get("/")
async def root():
    """根路径"""
    return {
        "message": "局域声子动力学解耦模拟器API",
        "version": "1.0.0",
        "docs": "/docs"
    }


@app.get("/health")
async def health_check():
    """健康检查"""
    settings = get_settings()
    return {
        "status": "ok",
        "workers": settings.workers,
        "presets": len(PRESET_NAMES)
    }


if __name__ == "__main__":
    import uvicorn

    settings = get_settings()
    uvicorn.run(app=app, host=settings.host, port=settings.port)
