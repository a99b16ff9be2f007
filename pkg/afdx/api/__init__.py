"""afd-explorer - API Package"""
from afdx.api import evaluations, scenarios

__all__ = ["evaluations", "scenarios"]
