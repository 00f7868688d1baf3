from .app import create_app
from .auth import AuthService
from .bootstrap import Services, build_services, serve
from .config import ServerConfig, load_config

__all__ = [
    "AuthService",
    "ServerConfig",
    "Services",
    "build_services",
    "create_app",
    "load_config",
    "serve",
]
