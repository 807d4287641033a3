"""Deterministic Cypher-subset parser, validator and executor.

The supported grammar is documented in docs/cypher-subset.md. Statements are
parsed individually (errors never abort later statements), re-render to a
canonical text form, and execute against a PropertyGraph with deterministic
result ordering.
"""

from .ast import (
    Agg,
    BoolOp,
    Cmp,
    Lit,
    NodePattern,
    OrderItem,
    Pattern,
    PropRef,
    RelPattern,
    ReturnItem,
    SetItem,
    Statement,
    VarRef,
    render,
    render_value,
)
from .executor import (
    ExecutionError,
    ExecutionResult,
    MutationSummary,
    ResultTable,
    ValidationError,
    execute,
    validate,
)
from .parser import ParseError, parse, parse_one

__all__ = [
    "Agg", "BoolOp", "Cmp", "Lit", "NodePattern", "OrderItem", "Pattern",
    "PropRef", "RelPattern", "ReturnItem", "SetItem", "Statement", "VarRef",
    "render", "render_value",
    "ExecutionError", "ExecutionResult", "MutationSummary", "ResultTable",
    "ValidationError", "execute", "validate",
    "ParseError", "parse", "parse_one",
]
