from .app import create_app, load_config_registry

__all__ = ["create_app", "load_config_registry"]
