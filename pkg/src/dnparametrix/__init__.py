"""Exact glancing-region parametrix jets for a model Dirichlet-to-Neumann problem."""

from .symring import ComplexRational, JetSeries, SymExpr, parse_expr, format_expr

__all__ = ["ComplexRational", "JetSeries", "SymExpr", "parse_expr", "format_expr"]
