"""kgrag: an embeddable knowledge-graph RAG engine.

A property-graph store with a deterministic Cypher subset, LLM-driven
ingestion, three graph-grounded retrieval patterns with provenance, session
memory with supersession, factual-adherence scoring, and a regression
harness built on canonical graph diffs.
"""

from .graph import Edge, GraphError, GraphStore, Node, PropertyGraph, Triple

__version__ = "0.1.0"

__all__ = ["Edge", "GraphError", "GraphStore", "Node", "PropertyGraph", "Triple",
           "__version__"]
