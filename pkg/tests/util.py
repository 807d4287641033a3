"""Shared helpers for building random fixture graphs."""

import random

from kgrag.graph import PropertyGraph

LABELS = ["Customer", "Product", "SalesRep", "Complaint", "Region"]
RELS = ["PURCHASED", "COMPLAINED_ABOUT", "VISITED", "SUPPLIES", "LOCATED_IN"]
KEYS = ["name", "volume", "year", "active", "note"]


def random_value(rng: random.Random):
    kind = rng.randrange(4)
    if kind == 0:
        return "".join(rng.choices("abcdefgh", k=rng.randrange(1, 8)))
    if kind == 1:
        return round(rng.uniform(-1000, 1000), 3)
    if kind == 2:
        return rng.random() < 0.5
    return [round(rng.uniform(0, 10), 2) for _ in range(rng.randrange(1, 4))]


def random_properties(rng: random.Random, max_props: int = 3) -> dict:
    return {rng.choice(KEYS): random_value(rng) for _ in range(rng.randrange(max_props + 1))}


def random_graph(rng: random.Random, n_nodes: int, n_edges: int) -> PropertyGraph:
    g = PropertyGraph()
    ids = [g.add_node({rng.choice(LABELS)}, random_properties(rng)) for _ in range(n_nodes)]
    if ids:
        for _ in range(n_edges):
            g.add_edge(rng.choice(RELS), rng.choice(ids), rng.choice(ids),
                       random_properties(rng))
    return g
