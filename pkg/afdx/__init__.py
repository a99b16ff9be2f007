"""afd-explorer - Disaggregated LLM Serving Design-Space Explorer"""

__version__ = "0.1.0"
