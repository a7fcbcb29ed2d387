from fastapi import FastAPI, Depends
from contextlib import asynccontextmanager
from fastapi.middleware.cors import CORSMiddleware

from ucmab import __version__
from ucmab.settings import configure_logging
from web.dependencies import get_registry
from web.registry import AgentRegistry, registry
from web.routes import router as uplift_router
from web.api.agents import router as agents_router


# Lifespan context manager for startup/shutdown events
@asynccontextmanager
async def lifespan(app: FastAPI):
    # Startup: load agent checkpoints
    configure_logging()
    registry.load()
    yield


# Create FastAPI app
app = FastAPI(
    title="U-CMAB Decision Service",
    description="Uplifted contextual bandit agents served over HTTP",
    version=__version__,
    lifespan=lifespan
)

# Enable CORS for all origins
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(uplift_router)
app.include_router(agents_router)


# Root endpoint
@app.get("/")
async def root():
    """Root endpoint"""
    return {
        "message": "Welcome to the U-CMAB Decision Service",
        "status": "running",
        "version": __version__
    }


# Health check endpoint
@app.get("/health")
async def health_check(agents: AgentRegistry = Depends(get_registry)):
    """Check API health and loaded agents"""
    return {
        "status": "healthy",
        "agents": len(agents)
    }


if __name__ == "__main__":
    import uvicorn
    import os
    port = int(os.getenv("PORT", 10000))
    uvicorn.run("main:app", host="0.0.0.0", port=port, reload=False)
