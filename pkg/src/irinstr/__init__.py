"""irinstr: JSON-rule-driven instrumentation of a textual SSA IR subset."""

__version__ = "0.1.0"
