"""Toolkit for analyzing normative requirement documents written in the
SLEEC DSL: parsing, relation extraction and filtering, and bounded-trace
well-formedness analysis."""

__version__ = "0.1.0"
