import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from .. import __version__
from ..config import settings
from .routes import router

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info("kgspec lab API starting up")
    logger.info(f"API documentation available at http://{settings.api_host}:{settings.api_port}/docs")
    yield
    logger.info("kgspec lab API shutting down")

app = FastAPI(
    title="kgspec Lab",
    version=__version__,
    description="Coefficient classification, rate prediction and experiment runs for Klein-Gordon models",
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(router)
