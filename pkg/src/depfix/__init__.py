"""Detect and repair deprecated library-API usage in LLM line completions."""

from depfix.mappings import ApiMapping, Fqn, MappingSet, load_mappings

__all__ = ["ApiMapping", "Fqn", "MappingSet", "load_mappings"]
__version__ = "0.1.0"
