from .api import app, run

__all__=["app", "run"]
