"""
============================================================================
SYSTEM MODULE — MODEL CONFIGURATION FILES
============================================================================
JSON model documents, validated with pydantic and turned into library
objects. Three kinds share one file format, told apart by "kind":
  • markov_tree  — nodes with tail constants c, edges carrying
                   "increment", "reverse_increment" and/or "pickands"
  • max_linear   — {"alpha", "coeff"}
  • recursive_ml — DAG nodes and edges with "gamma"
Any of them may list an optional subset "K" for the verify command.
Query documents for the nu and mpd commands are validated here as well.
============================================================================
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Any, Literal, Union

from pydantic import (
    BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, field_validator,
    model_validator,
)

from modules.calculus.increments import (
    IncrementDistribution, increment_from_dict, increment_from_pickands,
)
from modules.calculus.maxlinear import MaxLinearModel, RecursiveMLModel, sem_to_maxlinear
from modules.calculus.pickands import PickandsFunction, pickands_from_dict
from modules.calculus.tail_measure import Event, RhoFunctional
from modules.calculus.tail_tree import TailTreeModel
from modules.calculus.tree_core import Tree, Edge, parse_tree
from modules.errors import ConfigError, TailTreeError

logger = logging.getLogger(__name__)

NodeId = Annotated[str, Field(min_length=1)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", coerce_numbers_to_str=True)


# ── Schemas ──────────────────────────────────────────────────────────────────

class TreeNodeSpec(_Strict):
    id: NodeId
    c: PositiveFloat | None = None


class TreeEdgeSpec(_Strict):
    model_config = ConfigDict(extra="forbid", coerce_numbers_to_str=True,
                              populate_by_name=True)

    source: NodeId = Field(alias="from")
    target: NodeId = Field(alias="to")
    increment: dict[str, Any] | None = None
    reverse_increment: dict[str, Any] | None = None
    pickands: dict[str, Any] | None = None

    @field_validator("increment", "reverse_increment", "pickands")
    @classmethod
    def _typed(cls, spec):
        if spec is not None and "type" not in spec:
            raise ValueError("law spec needs a 'type'")
        return spec


class MarkovTreeSpec(_Strict):
    kind: Literal["markov_tree"]
    alpha: PositiveFloat = 1.0
    nodes: list[TreeNodeSpec | NodeId]
    edges: list[TreeEdgeSpec]
    K: list[NodeId] | None = None


class MaxLinearSpec(_Strict):
    kind: Literal["max_linear"]
    alpha: PositiveFloat
    coeff: list[list[float]]
    nodes: list[NodeId] | None = None
    K: list[NodeId] | None = None


class DagNodeSpec(_Strict):
    id: NodeId
    gamma: PositiveFloat


class DagEdgeSpec(_Strict):
    model_config = ConfigDict(extra="forbid", coerce_numbers_to_str=True,
                              populate_by_name=True)

    source: NodeId = Field(alias="from")
    target: NodeId = Field(alias="to")
    gamma: PositiveFloat


class RecursiveMLSpec(_Strict):
    kind: Literal["recursive_ml"]
    alpha: PositiveFloat = 1.0
    nodes: list[DagNodeSpec]
    edges: list[DagEdgeSpec] = []
    K: list[NodeId] | None = None


class ModelDocument(BaseModel):
    model: Annotated[Union[MarkovTreeSpec, MaxLinearSpec, RecursiveMLSpec],
                     Field(discriminator="kind")]


# ── Query Schemas ────────────────────────────────────────────────────────────

class RhoSpec(_Strict):
    kind: Literal["max", "sum", "min", "coordinate"]
    weights: dict[NodeId, float] | list[NodeId] | None = None
    node: NodeId | None = None

    @model_validator(mode="after")
    def _operands(self):
        if self.kind == "coordinate" and self.node is None:
            raise ValueError("coordinate rho needs 'node'")
        if self.kind != "coordinate" and self.weights is None:
            raise ValueError(f"{self.kind} rho needs 'weights'")
        return self

    def build(self) -> RhoFunctional:
        return RhoFunctional.from_dict(self.model_dump(exclude_none=True))


class BoxSpec(_Strict):
    lower: dict[NodeId, float] = {}
    upper: dict[NodeId, float] = {}


class EventSpec(_Strict):
    type: Literal["everything", "orthant", "union", "box", "boxes"] = "box"
    J: list[NodeId] | None = None
    y: list[float] | None = None
    lower: dict[NodeId, float] = {}
    upper: dict[NodeId, float] = {}
    boxes: list[BoxSpec] | None = None

    @model_validator(mode="after")
    def _shape(self):
        if self.type in ("orthant", "union") and (self.J is None or self.y is None):
            raise ValueError(f"{self.type} event needs 'J' and 'y'")
        if self.type == "boxes" and self.boxes is None:
            raise ValueError("boxes event needs 'boxes'")
        return self

    def build(self) -> Event:
        return Event.from_dict(self.model_dump(exclude_none=True))


class ThresholdQuery(_Strict):
    kind: Literal["orthant", "union", "consistency"]
    J: list[NodeId]
    y: list[float]


class RhoMassQuery(_Strict):
    kind: Literal["rho_mass"]
    rho: RhoSpec


class MpdQuery(_Strict):
    kind: Literal["mpd"]
    rho: RhoSpec
    A: EventSpec


class ZeroMassQuery(_Strict):
    kind: Literal["zero_mass"]


Query = Union[ThresholdQuery, RhoMassQuery, MpdQuery, ZeroMassQuery]


class QueryDocument(BaseModel):
    query: Annotated[Query, Field(discriminator="kind")]


# ── Loaded Models ────────────────────────────────────────────────────────────

@dataclass
class LoadedModel:
    """A validated document plus the library objects built from it."""

    kind: str
    alpha: float
    nodes: tuple[str, ...]
    K: list[str] | None = None
    tree: Tree | None = None
    tail_model: TailTreeModel | None = None
    pairs: dict[Edge, PickandsFunction] = field(default_factory=dict)
    max_linear: MaxLinearModel | None = None
    recursive: RecursiveMLModel | None = None

    def require_tail_model(self) -> TailTreeModel:
        if self.tail_model is None:
            raise ConfigError(f"a {self.kind} model has no tail tree", "model kind")
        return self.tail_model

    def require_max_linear(self) -> MaxLinearModel:
        if self.max_linear is None:
            raise ConfigError(f"a {self.kind} model has no max-linear form", "model kind")
        return self.max_linear


def load_model(path) -> LoadedModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"model file {path} not found", "model file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}", "model file") from None
    model = model_from_dict(doc)
    logger.info(f"[Config] Loaded {model.kind} model from {path} ({len(model.nodes)} nodes)")
    return model


def model_from_dict(doc: dict) -> LoadedModel:
    try:
        spec = ModelDocument.model_validate({"model": doc}).model
    except ValidationError as exc:
        raise ConfigError(str(exc), "model schema") from None
    try:
        if isinstance(spec, MarkovTreeSpec):
            return _build_markov_tree(spec)
        if isinstance(spec, MaxLinearSpec):
            return _build_max_linear(spec)
        return _build_recursive(spec)
    except TailTreeError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed law spec: {exc!r}", "model schema") from None


def _build_markov_tree(spec: MarkovTreeSpec) -> LoadedModel:
    node_ids = [n if isinstance(n, str) else n.id for n in spec.nodes]
    tree = parse_tree({"nodes": node_ids,
                       "edges": [[e.source, e.target] for e in spec.edges]})
    c = {n.id: n.c for n in spec.nodes if not isinstance(n, str) and n.c is not None}

    increments: dict[Edge, IncrementDistribution] = {}
    pairs: dict[Edge, PickandsFunction] = {}
    for e in spec.edges:
        a, b = e.source, e.target
        if e.pickands is not None:
            pairs[(a, b)] = pickands_from_dict(e.pickands)
        if e.increment is not None:
            increments[(a, b)] = increment_from_dict(e.increment)
        elif e.pickands is not None:
            increments[(a, b)] = increment_from_pickands(pairs[(a, b)])
        if e.reverse_increment is not None:
            increments[(b, a)] = increment_from_dict(e.reverse_increment)

    tail_model = None
    if increments:
        tail_model = TailTreeModel(tree, spec.alpha, c, increments)
    return LoadedModel("markov_tree", spec.alpha, tree.nodes, spec.K, tree=tree,
                       tail_model=tail_model, pairs=pairs)


def _build_max_linear(spec: MaxLinearSpec) -> LoadedModel:
    ml = MaxLinearModel(spec.coeff, spec.alpha, nodes=spec.nodes)
    return LoadedModel("max_linear", spec.alpha, ml.nodes, spec.K, max_linear=ml)


def _build_recursive(spec: RecursiveMLSpec) -> LoadedModel:
    rm = RecursiveMLModel.from_spec(
        [{"id": n.id, "gamma": n.gamma} for n in spec.nodes],
        [{"from": e.source, "to": e.target, "gamma": e.gamma} for e in spec.edges])
    ml = sem_to_maxlinear(rm, spec.alpha)
    return LoadedModel("recursive_ml", spec.alpha, ml.nodes, spec.K,
                       max_linear=ml, recursive=rm)


# ── Query Documents ──────────────────────────────────────────────────────────

def load_query(path, kind: str | None = None) -> Query:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"query file {path} not found", "query") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}", "query") from None
    return query_from_dict(doc, kind)


def query_from_dict(doc, kind: str | None = None) -> Query:
    """Validate a query document; ``kind`` fills in and pins the query kind."""
    if not isinstance(doc, dict):
        raise ConfigError("a query must be a JSON object", "query")
    if kind is not None:
        doc = {"kind": kind, **doc}
    try:
        query = QueryDocument.model_validate({"query": doc}).query
    except ValidationError as exc:
        raise ConfigError(str(exc), "query") from None
    if kind is not None and query.kind != kind:
        raise ConfigError(f"expected a {kind} query, got {query.kind!r}", "query")
    return query
