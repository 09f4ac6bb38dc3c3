"""Reference backend server for the capforge wire protocol."""

from .app import ServerConfig, create_app

__all__ = ["ServerConfig", "create_app"]
