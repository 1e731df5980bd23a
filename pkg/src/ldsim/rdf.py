"""RDF terms, quads and immutable datasets.

A dataset is stored as a mapping from graph name to a frozenset of triples,
which makes graph replacement, graph-confined deltas and symmetric
difference cheap: unchanged graphs are shared between dataset versions and
compared by identity first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

from .ns import DEFAULT_GRAPH, RDF_LANG_STRING, XSD_STRING, defrag


@dataclass(frozen=True, slots=True)
class IRI:
    value: str

    def __repr__(self) -> str:
        return f"<{self.value}>"


@dataclass(frozen=True, slots=True)
class BlankNode:
    label: str

    def __repr__(self) -> str:
        return f"_:{self.label}"


@dataclass(frozen=True, slots=True)
class Literal:
    """A literal compared by lexical form plus datatype, not by value."""

    lexical: str
    datatype: str = XSD_STRING
    lang: str = ""

    def __repr__(self) -> str:
        if self.lang:
            return f'"{self.lexical}"@{self.lang}'
        if self.datatype != XSD_STRING:
            return f'"{self.lexical}"^^<{self.datatype}>'
        return f'"{self.lexical}"'


Term = IRI | BlankNode | Literal
Triple = tuple  # (subject, predicate, object)


def lang_literal(lexical: str, lang: str) -> Literal:
    return Literal(lexical, RDF_LANG_STRING, lang)


class Quad(NamedTuple):
    s: Term
    p: IRI
    o: Term
    g: IRI


class Dataset:
    """An immutable set of quads grouped by graph name."""

    __slots__ = ("_graphs", "_pred", "_nav")

    def __init__(self, graphs: dict[str, frozenset] | None = None):
        self._graphs: dict[str, frozenset] = graphs or {}
        self._pred: dict[str, frozenset] | None = None
        self._nav: dict[str, tuple[dict, dict]] = {}

    @classmethod
    def from_quads(cls, quads: Iterable[Quad]) -> "Dataset":
        by_graph: dict[str, set] = {}
        for s, p, o, g in quads:
            by_graph.setdefault(g.value, set()).add((s, p, o))
        return cls({g: frozenset(ts) for g, ts in by_graph.items()})

    # -- views ------------------------------------------------------------

    def graph_names(self) -> frozenset[str]:
        return frozenset(self._graphs)

    def graph(self, name: str) -> frozenset:
        return self._graphs.get(name, frozenset())

    def has_graph(self, name: str) -> bool:
        return name in self._graphs

    def graphs(self) -> Iterator[tuple[str, frozenset]]:
        return iter(self._graphs.items())

    def quads(self) -> Iterator[Quad]:
        for g, triples in self._graphs.items():
            gi = IRI(g)
            for s, p, o in triples:
                yield Quad(s, p, o, gi)

    def __len__(self) -> int:
        return sum(len(ts) for ts in self._graphs.values())

    def __contains__(self, quad: Quad) -> bool:
        return (quad.s, quad.p, quad.o) in self._graphs.get(quad.g.value, ())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Dataset) and self._graphs == other._graphs

    def __hash__(self):  # pragma: no cover - datasets are not hashed
        raise TypeError("Dataset is unhashable")

    def __repr__(self) -> str:
        return f"Dataset({len(self._graphs)} graphs, {len(self)} quads)"

    # -- predicate index ---------------------------------------------------

    def pred_entries(self, predicate: str) -> frozenset:
        """All (s, o, graph-name) entries for one predicate IRI."""
        if self._pred is None:
            index: dict[str, set] = {}
            for g, triples in self._graphs.items():
                for s, p, o in triples:
                    index.setdefault(p.value, set()).add((s, o, g))
            self._pred = {p: frozenset(e) for p, e in index.items()}
        return self._pred.get(predicate, frozenset())

    def pred_nav(self, predicate: str) -> tuple[dict, dict]:
        """(subject -> objects, object -> subjects) maps over all graphs,
        with duplicate scoped copies collapsed. Built per predicate on demand."""
        if predicate not in self._nav:
            fwd: dict = {}
            bwd: dict = {}
            for s, o in {(s, o) for s, o, _ in self.pred_entries(predicate)}:
                fwd.setdefault(s, []).append(o)
                bwd.setdefault(o, []).append(s)
            self._nav[predicate] = (fwd, bwd)
        return self._nav[predicate]

    def _derive_index(self, changed: dict[str, tuple[frozenset, frozenset]]):
        """Carry the parent index over to a child, patching changed graphs."""
        if self._pred is None:
            return None
        removed: dict[str, set] = {}
        added: dict[str, set] = {}
        for g, (before, after) in changed.items():
            for s, p, o in before - after:
                removed.setdefault(p.value, set()).add((s, o, g))
            for s, p, o in after - before:
                added.setdefault(p.value, set()).add((s, o, g))
        index = dict(self._pred)
        for p in set(removed) | set(added):
            entries = set(index.get(p, ()))
            entries -= removed.get(p, set())
            entries |= added.get(p, set())
            if entries:
                index[p] = frozenset(entries)
            else:
                index.pop(p, None)
        return index

    # -- derivation --------------------------------------------------------

    def replace_graphs(self, updates: dict[str, Iterable]) -> "Dataset":
        """New dataset with the given graphs replaced (empty set removes)."""
        changed: dict[str, tuple[frozenset, frozenset]] = {}
        graphs = dict(self._graphs)
        for name, triples in updates.items():
            before = self._graphs.get(name, frozenset())
            after = frozenset(triples)
            if before == after:
                continue
            changed[name] = (before, after)
            if after:
                graphs[name] = after
            else:
                graphs.pop(name, None)
        if not changed:
            return self
        child = Dataset(graphs)
        child._pred = self._derive_index(changed)
        return child

    def apply(self, remove: Iterable[Quad], add: Iterable[Quad]) -> "Dataset":
        """Remove then add quads, returning a new dataset."""
        touched: dict[str, set] = {}

        def staging(g: str) -> set:
            if g not in touched:
                touched[g] = set(self._graphs.get(g, ()))
            return touched[g]

        for s, p, o, g in remove:
            staging(g.value).discard((s, p, o))
        for s, p, o, g in add:
            staging(g.value).add((s, p, o))
        return self.replace_graphs({g: ts for g, ts in touched.items()})


def symmetric_difference(d1: Dataset, d2: Dataset) -> Dataset:
    """Quads in exactly one of the two datasets."""
    out: dict[str, frozenset] = {}
    for name in d1.graph_names() | d2.graph_names():
        a = d1.graph(name)
        b = d2.graph(name)
        if a is b or a == b:
            continue
        diff = a ^ b
        if diff:
            out[name] = diff
    return Dataset(out)


def graph_projection(d: Dataset) -> frozenset[str]:
    """The set of resource IRIs (graph names) appearing in a dataset."""
    return d.graph_names()


@dataclass(frozen=True)
class Graph:
    """A named graph: the projection of a dataset onto one graph name."""

    name: str
    triples: frozenset

    def __len__(self) -> int:
        return len(self.triples)


def graph_view(d: Dataset, name: str) -> Graph:
    return Graph(name, d.graph(name))


# -- blank node handling ----------------------------------------------------


def skolem_iri(base: str, doc_key: str, label: str) -> str:
    return f"{base}.well-known/genid/{doc_key}-{label}"


def skolemize(d: Dataset, base: str, doc_key: str) -> Dataset:
    """Replace blank nodes with stable IRIs derived from a document key.

    Server-held datasets need deterministic node identity across loads so
    that graph deltas and fault matching are well-defined.
    """

    def conv(t: Term) -> Term:
        if isinstance(t, BlankNode):
            return IRI(skolem_iri(base, doc_key, t.label))
        return t

    out: dict[str, frozenset] = {}
    for g, triples in d.graphs():
        out[g] = frozenset((conv(s), p, conv(o)) for s, p, o in triples)
    return Dataset(out)


def rebase_dataset(d: Dataset, old: str, new: str) -> Dataset:
    """Rewrite every IRI under one base prefix to another."""
    if old == new:
        return d

    def conv(t: Term) -> Term:
        if isinstance(t, IRI) and t.value.startswith(old):
            return IRI(new + t.value[len(old):])
        return t

    out: dict[str, frozenset] = {}
    for g, triples in d.graphs():
        name = new + g[len(old):] if g.startswith(old) else g
        out[name] = frozenset((conv(s), conv(p), conv(o)) for s, p, o in triples)
    return Dataset(out)


# -- graph isomorphism -------------------------------------------------------


def isomorphic(a: Iterable[Triple], b: Iterable[Triple]) -> bool:
    """Graph equality up to blank node relabeling.

    Backtracking over signature-partitioned blank nodes; intended for the
    small graphs exchanged over the wire, not for whole buildings.
    """
    ta, tb = set(a), set(b)
    ground_a = {t for t in ta if not _has_blank(t)}
    ground_b = {t for t in tb if not _has_blank(t)}
    if ground_a != ground_b or len(ta) != len(tb):
        return False
    ba, bb = _blanks(ta), _blanks(tb)
    if len(ba) != len(bb):
        return False
    return _match(sorted(ba), list(bb), {}, ta - ground_a, tb - ground_b)


def _has_blank(t: Triple) -> bool:
    return isinstance(t[0], BlankNode) or isinstance(t[2], BlankNode)


def _blanks(triples: set) -> set[str]:
    out = set()
    for s, _, o in triples:
        if isinstance(s, BlankNode):
            out.add(s.label)
        if isinstance(o, BlankNode):
            out.add(o.label)
    return out


def _apply_mapping(triples: set, mapping: dict[str, str]) -> set:
    def conv(t: Term) -> Term:
        if isinstance(t, BlankNode) and t.label in mapping:
            return BlankNode(mapping[t.label])
        return t

    return {(conv(s), p, conv(o)) for s, p, o in triples}


def _match(pending: list[str], candidates: list[str], mapping: dict[str, str],
           ta: set, tb: set) -> bool:
    if not pending:
        return _apply_mapping(ta, mapping) == tb
    label = pending[0]
    for cand in candidates:
        mapping[label] = cand
        rest = [c for c in candidates if c != cand]
        if _match(pending[1:], rest, mapping, ta, tb):
            return True
        del mapping[label]
    return False


def default_graph_iri() -> IRI:
    return IRI(DEFAULT_GRAPH)


def scoped_quads(s: Term, p: IRI, o: Term, *graph_iris: str) -> list[Quad]:
    """One triple placed into several graphs (fragments share a graph)."""
    return [Quad(s, p, o, IRI(defrag(g))) for g in graph_iris]
