"""Bilinear digraphs and the bilinear systems they induce.

A bilinear digraph carries a weighted edge set (the drift), a set of nodes
hit by additive disturbances, and a ground set of *vulnerable* edges whose
couplings an attacker may perturb multiplicatively.  Choosing an attack set
among the vulnerable edges yields the system

    dx/dt = (N0 + sum_k eta_k N_k) x + B v,    y = x.

Conventions
-----------
Node labels are positive integers and are used verbatim in files and on the
command line; matrices are indexed by each label's position in the sorted
node tuple.

An edge ``(u, v)`` points from tail ``u`` to head ``v``.  Its weight enters
the drift at ``N0[v, u]`` so that state ``u`` drives the derivative of state
``v``.  The coupling matrix of an attacked edge is the elementary matrix
``E[u, v]`` (``orientation="tail_head"``, the default) or ``E[v, u]``
(``orientation="head_tail"``, aligned with the drift entry).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from numbers import Integral, Real
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import (AttackOutsideGroundSet, BadSign, InvalidInput,
                     InvalidNode, InvalidVulnerableEdge, NonFiniteWeight)

__all__ = ['Edge', 'AttackSet', 'BilinearDigraph', 'BilinearSystem',
           'new_digraph', 'ring_digraph', 'assemble_system',
           'elementary_coupling', 'relabel', 'parse_edge', 'parse_edge_list',
           'parse_graph_spec', 'load_graph_spec', 'graph_spec_dict',
           'ORIENTATIONS']

ORIENTATIONS = ('tail_head', 'head_tail')


class Edge(NamedTuple):
    tail: int
    head: int

    def __str__(self):
        return f'{self.tail}->{self.head}'


def parse_edge(value) -> Edge:
    """Coerce ``"u->v"``, ``(u, v)`` or an :class:`Edge` into an Edge."""
    if isinstance(value, Edge):
        return value
    if isinstance(value, str):
        parts = value.split('->')
        if len(parts) != 2:
            raise InvalidInput(f'malformed edge {value!r}; expected "u->v"')
        try:
            return Edge(int(parts[0].strip()), int(parts[1].strip()))
        except ValueError:
            raise InvalidInput(f'malformed edge {value!r}; expected "u->v"') from None
    try:
        u, v = value
    except (TypeError, ValueError):
        raise InvalidInput(f'malformed edge {value!r}') from None
    return Edge(_node_label(u, 'edge tail'), _node_label(v, 'edge head'))


def parse_edge_list(text: str) -> list[Edge]:
    """Parse a comma-separated ``"u->v,w->z"`` list; blank means empty."""
    text = text.strip()
    if not text:
        return []
    return [parse_edge(item) for item in text.split(',')]


def _node_label(value, what='node') -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise InvalidNode(f'{what} {value!r} is not an integer node label')
    if value < 1:
        raise InvalidNode(f'{what} {value!r} must be a positive integer')
    return int(value)


@dataclass(frozen=True, init=False)
class AttackSet:
    """Canonical (sorted, duplicate-free) set of attacked edges.

    Hashable and totally ordered by (cardinality, lexicographic edges) so it
    can key caches and order lattice rows.
    """

    edges: tuple[Edge, ...]

    def __init__(self, edges: Iterable = ()):
        canon = tuple(sorted({parse_edge(e) for e in edges}))
        object.__setattr__(self, 'edges', canon)

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)

    def __contains__(self, edge):
        return parse_edge(edge) in self.edges

    def __or__(self, other):
        if isinstance(other, (Edge, str)):
            other = (other,)
        return AttackSet(self.edges + tuple(other))

    def __sub__(self, other):
        if isinstance(other, (Edge, str)):
            other = (other,)
        drop = {parse_edge(e) for e in other}
        return AttackSet(e for e in self.edges if e not in drop)

    def __lt__(self, other):
        return (len(self), self.edges) < (len(other), other.edges)

    def issubset(self, other) -> bool:
        return set(self.edges) <= set(AttackSet(other).edges)

    def label(self, sep=';') -> str:
        return sep.join(str(e) for e in self.edges)

    def __str__(self):
        return '{' + self.label(', ') + '}'


@dataclass(frozen=True)
class BilinearDigraph:
    """Immutable, validated bilinear digraph.

    Build instances through :func:`new_digraph` or :func:`ring_digraph`;
    the constructor assumes canonical (sorted) fields.
    """

    nodes: tuple[int, ...]
    edges: tuple[tuple[Edge, float], ...]
    attacked_nodes: tuple[int, ...]
    vulnerable_edges: tuple[Edge, ...]
    scale: float = 1.0
    weighted_couplings: bool = False
    orientation: str = 'tail_head'
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, '_index',
                           {v: i for i, v in enumerate(self.nodes)})

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def weights(self) -> dict[Edge, float]:
        return dict(self.edges)

    @property
    def ground_set(self) -> AttackSet:
        return AttackSet(self.vulnerable_edges)

    def index(self, node: int) -> int:
        """0-based matrix index of a node label."""
        try:
            return self._index[node]
        except KeyError:
            raise InvalidNode(f'node {node} not in node set') from None

    def drift(self) -> np.ndarray:
        n = self.n
        N0 = np.zeros((n, n))
        for (u, v), w in self.edges:
            N0[self.index(v), self.index(u)] += w
        return self.scale * N0

    def coupling(self, edge) -> np.ndarray:
        edge = parse_edge(edge)
        weights = self.weights
        if edge not in weights:
            raise InvalidVulnerableEdge(f'edge {edge} not in edge set')
        local = Edge(self.index(edge.tail) + 1, self.index(edge.head) + 1)
        N = elementary_coupling(local, self.n, orientation=self.orientation)
        if self.weighted_couplings:
            N = N * weights[edge]
        return N


def new_digraph(nodes, weighted_edges, attacked_nodes, vulnerable_edges=(),
                scale=1.0, *, weighted_couplings=False,
                orientation='tail_head') -> BilinearDigraph:
    """Validate inputs and build a :class:`BilinearDigraph`.

    Parameters
    ----------
    nodes : int or iterable of int
        Either a node count ``n`` (labels ``1..n``) or explicit positive
        labels.
    weighted_edges : mapping or iterable
        ``{(u, v): w}`` or an iterable of ``(u, v, w)`` triples.
    attacked_nodes : iterable of int
        Nodes receiving an additive disturbance; one input column each.
    vulnerable_edges : iterable
        Ground set of attackable edges; must be a subset of the edge set.
    scale : float
        Positive multiplier applied to the drift matrix.
    weighted_couplings : bool
        Multiply each coupling matrix by its edge weight (off by default).
    orientation : {'tail_head', 'head_tail'}
        Placement of the unit entry in coupling matrices.
    """
    if isinstance(nodes, Integral) and not isinstance(nodes, bool):
        if nodes < 1:
            raise InvalidInput('node set must be nonempty')
        node_set = set(range(1, int(nodes) + 1))
    else:
        node_set = {_node_label(v) for v in nodes}
    if not node_set:
        raise InvalidInput('node set must be nonempty')

    if isinstance(weighted_edges, Mapping):
        items = [(*parse_edge(e), w) for e, w in weighted_edges.items()]
    else:
        items = list(weighted_edges)
    edges: dict[Edge, float] = {}
    for item in items:
        try:
            u, v, w = item
        except (TypeError, ValueError):
            raise InvalidInput(f'edge entry {item!r} is not (tail, head, weight)') from None
        e = Edge(_node_label(u, 'edge tail'), _node_label(v, 'edge head'))
        for end in e:
            if end not in node_set:
                raise InvalidNode(f'edge {e}: endpoint {end} not in node set')
        if isinstance(w, bool) or not isinstance(w, Real) or not math.isfinite(w):
            raise NonFiniteWeight(f'edge {e}: weight {w!r} is not a finite number')
        if e in edges:
            raise InvalidInput(f'duplicate edge {e}')
        edges[e] = float(w)

    attacked = {_node_label(v, 'attacked node') for v in attacked_nodes}
    for v in attacked:
        if v not in node_set:
            raise InvalidNode(f'attacked node {v} not in node set')

    vulnerable = set()
    for e in vulnerable_edges:
        e = parse_edge(e)
        if e not in edges:
            raise InvalidVulnerableEdge(f'vulnerable edge {e} not in edge set')
        vulnerable.add(e)

    if isinstance(scale, bool) or not isinstance(scale, Real) \
            or not math.isfinite(scale) or scale <= 0:
        raise InvalidInput(f'scale must be a positive finite number, got {scale!r}')
    if orientation not in ORIENTATIONS:
        raise InvalidInput(f'orientation must be one of {ORIENTATIONS}')

    return BilinearDigraph(
        nodes=tuple(sorted(node_set)),
        edges=tuple(sorted(edges.items())),
        attacked_nodes=tuple(sorted(attacked)),
        vulnerable_edges=tuple(sorted(vulnerable)),
        scale=float(scale),
        weighted_couplings=bool(weighted_couplings),
        orientation=orientation,
    )


def ring_digraph(n=5, self_loop_weight=-1.0, forward_weight=1.0,
                 closing_weight=-1.0, scale=1.0, **kwargs) -> BilinearDigraph:
    """Directed ring ``1 -> 2 -> ... -> n -> 1`` with negative self-loops.

    Node 1 is the only node under additive attack and every non-loop edge is
    vulnerable.  With the defaults, the 5-node ring reproduces the published
    edge-protection table exactly, and attacking all five ring edges is
    unsolvable.
    """
    if isinstance(n, bool) or not isinstance(n, Integral) or n < 2:
        raise InvalidInput(f'ring needs n >= 2 nodes, got {n!r}')
    if not self_loop_weight < 0:
        raise BadSign(f'self_loop_weight must be negative, got {self_loop_weight}')
    if not closing_weight < 0:
        raise BadSign(f'closing_weight must be negative, got {closing_weight}')
    edges = {(i, i): self_loop_weight for i in range(1, n + 1)}
    ring = [(i, i + 1) for i in range(1, n)] + [(n, 1)]
    for e in ring[:-1]:
        edges[e] = forward_weight
    edges[ring[-1]] = closing_weight
    return new_digraph(n, edges, [1], ring, scale, **kwargs)


def elementary_coupling(edge, n: int, *, orientation='tail_head') -> np.ndarray:
    """Elementary coupling matrix of ``edge`` for nodes labelled ``1..n``."""
    u, v = parse_edge(edge)
    if not (1 <= u <= n and 1 <= v <= n):
        raise InvalidNode(f'edge {u}->{v} outside nodes 1..{n}')
    N = np.zeros((n, n))
    if orientation == 'tail_head':
        N[u - 1, v - 1] = 1.0
    elif orientation == 'head_tail':
        N[v - 1, u - 1] = 1.0
    else:
        raise InvalidInput(f'orientation must be one of {ORIENTATIONS}')
    return N


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, ndmin=2)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BilinearSystem:
    """Matrices of ``dx/dt = (N0 + sum eta_k N_k) x + B v, y = C x``.

    ``couplings`` pairs each coupling matrix with the edge it came from, or
    ``None`` for systems built directly from matrices.
    """

    N0: np.ndarray
    couplings: tuple = ()
    B: np.ndarray = None
    C: np.ndarray = None

    def __post_init__(self):
        N0 = _frozen(self.N0)
        n = N0.shape[0]
        if N0.shape != (n, n):
            raise InvalidInput(f'N0 must be square, got shape {N0.shape}')
        couplings = []
        for edge, N in self.couplings:
            N = _frozen(N)
            if N.shape != (n, n):
                raise InvalidInput(f'coupling for {edge} has shape {N.shape}')
            couplings.append((edge, N))
        B = np.zeros((n, 0)) if self.B is None else np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(n, -1)
        if B.shape[0] != n:
            raise InvalidInput(f'B must have {n} rows, got shape {B.shape}')
        C = np.eye(n) if self.C is None else self.C
        object.__setattr__(self, 'N0', N0)
        object.__setattr__(self, 'couplings', tuple(couplings))
        object.__setattr__(self, 'B', _frozen(B) if B.size else B)
        object.__setattr__(self, 'C', _frozen(C))

    @classmethod
    def from_matrices(cls, N0, couplings=(), B=None, C=None):
        return cls(N0, tuple((None, N) for N in couplings), B, C)

    @property
    def n(self) -> int:
        return self.N0.shape[0]

    @property
    def coupling_matrices(self) -> list[np.ndarray]:
        return [N for _, N in self.couplings]

    @property
    def attack_edges(self) -> list:
        return [e for e, _ in self.couplings]

    def with_couplings(self, couplings) -> 'BilinearSystem':
        return BilinearSystem.from_matrices(self.N0, couplings, self.B, self.C)


def assemble_system(digraph: BilinearDigraph, attack_set=()) -> BilinearSystem:
    """Build the bilinear system induced by attacking ``attack_set``."""
    attack = attack_set if isinstance(attack_set, AttackSet) else AttackSet(attack_set)
    ground = set(digraph.vulnerable_edges)
    outside = [e for e in attack if e not in ground]
    if outside:
        raise AttackOutsideGroundSet(
            'attack edges outside the vulnerable set: '
            + ', '.join(str(e) for e in outside))
    n = digraph.n
    B = np.zeros((n, len(digraph.attacked_nodes)))
    for col, v in enumerate(digraph.attacked_nodes):
        B[digraph.index(v), col] = 1.0
    couplings = tuple((e, digraph.coupling(e)) for e in attack)
    return BilinearSystem(digraph.drift(), couplings, B, np.eye(n))


def relabel(digraph: BilinearDigraph, mapping: Mapping[int, int]) -> BilinearDigraph:
    """Rename nodes through a bijection ``old label -> new label``."""
    if sorted(mapping) != list(digraph.nodes) \
            or len(set(mapping.values())) != len(mapping):
        raise InvalidInput('mapping must be a bijection on the node set')

    def m(e):
        return (mapping[e.tail], mapping[e.head])

    return new_digraph(
        list(mapping.values()),
        {m(e): w for e, w in digraph.edges},
        [mapping[v] for v in digraph.attacked_nodes],
        [m(e) for e in digraph.vulnerable_edges],
        digraph.scale,
        weighted_couplings=digraph.weighted_couplings,
        orientation=digraph.orientation,
    )


# -- graph-spec files --------------------------------------------------------

_REQUIRED = ('nodes', 'edges', 'attacked_nodes')
_OPTIONAL = ('vulnerable_edges', 'scale', 'weighted_couplings', 'orientation')


def parse_graph_spec(text: str) -> BilinearDigraph:
    """Parse a graph-spec JSON document.

    Errors are raised as :class:`InvalidInput` subclasses whose message names
    the offending line (syntax errors) or field path (schema errors).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f'line {exc.lineno}, column {exc.colno}: {exc.msg}') from None
    if not isinstance(doc, dict):
        raise InvalidInput('top level: expected a JSON object')
    unknown = sorted(set(doc) - set(_REQUIRED) - set(_OPTIONAL))
    if unknown:
        raise InvalidInput(f'unknown field(s): {", ".join(unknown)}')
    for key in _REQUIRED:
        if key not in doc:
            raise InvalidInput(f'missing required field "{key}"')

    nodes = doc['nodes']
    if isinstance(nodes, bool) or not isinstance(nodes, int) or nodes < 1:
        raise InvalidInput('nodes: expected a positive integer node count')
    if not isinstance(doc['edges'], list):
        raise InvalidInput('edges: expected a list')
    triples = []
    for i, item in enumerate(doc['edges']):
        where = f'edges[{i}]'
        if not isinstance(item, dict):
            raise InvalidInput(f'{where}: expected an object')
        extra = sorted(set(item) - {'tail', 'head', 'weight'})
        if extra:
            raise InvalidInput(f'{where}: unknown field(s): {", ".join(extra)}')
        for key in ('tail', 'head', 'weight'):
            if key not in item:
                raise InvalidInput(f'{where}: missing "{key}"')
        w = item['weight']
        if isinstance(w, bool) or not isinstance(w, (int, float)) or not math.isfinite(w):
            raise NonFiniteWeight(f'{where}.weight: expected a finite number, got {w!r}')
        triples.append((item['tail'], item['head'], w))
    if not isinstance(doc['attacked_nodes'], list):
        raise InvalidInput('attacked_nodes: expected a list')
    vuln = doc.get('vulnerable_edges', [])
    if not isinstance(vuln, list):
        raise InvalidInput('vulnerable_edges: expected a list of [tail, head] pairs')
    for i, pair in enumerate(vuln):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise InvalidInput(f'vulnerable_edges[{i}]: expected [tail, head]')
    scale = doc.get('scale', 1.0)
    if isinstance(scale, bool) or not isinstance(scale, (int, float)):
        raise InvalidInput('scale: expected a number')
    weighted = doc.get('weighted_couplings', False)
    if not isinstance(weighted, bool):
        raise InvalidInput('weighted_couplings: expected true or false')
    return new_digraph(nodes, triples, doc['attacked_nodes'], vuln, scale,
                       weighted_couplings=weighted,
                       orientation=doc.get('orientation', 'tail_head'))


def load_graph_spec(path) -> BilinearDigraph:
    try:
        with open(path, encoding='utf-8') as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidInput(f'{path}: {exc.strerror}') from None
    try:
        return parse_graph_spec(text)
    except InvalidInput as exc:
        raise type(exc)(f'{path}: {exc}') from None


def graph_spec_dict(digraph: BilinearDigraph) -> dict:
    """Serialize ``digraph`` to the graph-spec schema.

    Only digraphs labelled ``1..n`` can be written, since the file format
    stores a node count.
    """
    if digraph.nodes != tuple(range(1, digraph.n + 1)):
        raise InvalidInput('graph-spec files require nodes labelled 1..n')
    doc = {
        'nodes': digraph.n,
        'edges': [{'tail': e.tail, 'head': e.head, 'weight': w}
                  for e, w in digraph.edges],
        'attacked_nodes': list(digraph.attacked_nodes),
        'vulnerable_edges': [list(e) for e in digraph.vulnerable_edges],
        'scale': digraph.scale,
    }
    if digraph.weighted_couplings:
        doc['weighted_couplings'] = True
    if digraph.orientation != 'tail_head':
        doc['orientation'] = digraph.orientation
    return doc
