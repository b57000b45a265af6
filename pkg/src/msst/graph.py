"""Skeleton graphs: physical adjacency, source-target matrix and its powers."""
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import GraphError

BUNDLED = ("hand22", "body25", "body20")


@dataclass(frozen=True)
class GraphSpec:
    """A rooted skeleton tree given by its parent array.

    ``adjacency[i, j] == 1`` iff ``i`` and ``j`` share a bone;
    ``source_target[i, j] == 1`` iff ``parents[j] == i``.
    """

    parents: tuple
    name: str = ""
    adjacency: np.ndarray = field(init=False, repr=False, compare=False)
    source_target: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        parents = tuple(int(p) for p in self.parents)
        _validate_parents(parents)
        n = len(parents)
        P = np.zeros((n, n), dtype=np.int64)
        for j, p in enumerate(parents):
            if p >= 0:
                P[p, j] = 1
        A = P + P.T
        P.setflags(write=False)
        A.setflags(write=False)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "source_target", P)
        object.__setattr__(self, "adjacency", A)

    @property
    def num_joints(self):
        return len(self.parents)

    @property
    def root(self):
        return self.parents.index(-1)

    def edges(self):
        """(parent, child) pairs read back from ``source_target``."""
        src, dst = np.nonzero(self.source_target)
        return sorted(zip(src.tolist(), dst.tolist()), key=lambda e: e[1])

    def nilpotency_index(self):
        """Smallest ``K`` with ``P^K = 0``: nodes on the longest root-to-leaf path."""
        depth = [0] * self.num_joints
        for j in range(self.num_joints):
            d, p = 1, self.parents[j]
            while p >= 0:
                d, p = d + 1, self.parents[p]
            depth[j] = d
        return max(depth)

    def to_json(self):
        return {"name": self.name, "parents": list(self.parents)}


def _validate_parents(parents):
    n = len(parents)
    if n == 0:
        raise GraphError("a skeleton needs at least one joint")
    roots = [j for j, p in enumerate(parents) if p == -1]
    if len(roots) != 1:
        raise GraphError(f"expected exactly one root (-1), found {len(roots)}")
    for j, p in enumerate(parents):
        if p != -1 and not 0 <= p < n:
            raise GraphError(f"parent index {p} of joint {j} out of range [0, {n})")
        if p == j:
            raise GraphError(f"joint {j} is its own parent")
    for j in range(n):
        seen, p = {j}, parents[j]
        while p != -1:
            if p in seen:
                raise GraphError(f"parent relation has a cycle through joint {p}")
            seen.add(p)
            p = parents[p]


def build_graph(parents, name=""):
    return GraphSpec(tuple(parents), name=name)


def normalize_adjacency(A):
    """Symmetric normalisation ``D^-1/2 (A + I) D^-1/2`` with self-loops."""
    A = np.asarray(A, dtype=np.float64)
    Ah = A + np.eye(A.shape[0])
    d = 1.0 / np.sqrt(Ah.sum(axis=1))
    return Ah * d[:, None] * d[None, :]


def matrix_power(P, k):
    """``P**k`` in exact integer arithmetic, returned as float64."""
    if k < 0:
        raise ValueError(f"matrix power needs k >= 0, got {k}")
    P = np.asarray(P)
    if not np.array_equal(P, np.round(P)):
        raise ValueError("matrix_power expects an integer-valued matrix")
    out = np.linalg.matrix_power(P.astype(np.int64), k)
    return out.astype(np.float64)


def load_graph(path_or_name):
    """Load a graph JSON file ``{"name", "parents"}`` or a bundled graph by name."""
    if str(path_or_name) in BUNDLED:
        text = resources.files("msst.graphs").joinpath(f"{path_or_name}.json").read_text()
    else:
        with open(path_or_name) as fh:
            text = fh.read()
    try:
        obj = json.loads(text)
        return build_graph(obj["parents"], name=obj.get("name", ""))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise GraphError(f"malformed graph file {path_or_name}: {exc}") from exc


def save_graph(graph, path):
    with open(path, "w") as fh:
        json.dump(graph.to_json(), fh)


def chain_graph(n):
    """Simple path 0-1-...-(n-1) rooted at joint 0."""
    return build_graph([-1] + list(range(n - 1)), name=f"chain{n}")
