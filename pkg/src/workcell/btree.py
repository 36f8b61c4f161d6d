"""Behavior trees: the task-plan representation, validation, and executor.

Composites use memory semantics: a composite resumes at its running child on
the next tick instead of re-evaluating earlier children, because leaf
operations (robot motions) are long-running and must not be re-executed.
Leaves run as generators that yield RUNNING until their operation resolves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator

__all__ = [
    "NodeStatus",
    "NodeKind",
    "OperationBinding",
    "BTNode",
    "TreeParseError",
    "OperationFailure",
    "Violation",
    "StatusEvent",
    "Executor",
    "serialize_tree",
    "deserialize_tree",
    "validate",
    "iter_nodes",
]


class NodeStatus(str, Enum):
    IDLE = "IDLE"
    RUNNING = "RUNNING"
    SUCCESS = "SUCCESS"
    FAILURE = "FAILURE"


class NodeKind(str, Enum):
    SEQUENCE = "sequence"
    SELECTOR = "selector"
    LEAF = "leaf"


class TreeParseError(ValueError):
    """Malformed tree document; carries a line or node-path location."""

    def __init__(self, message: str, *, line: int | None = None, column: int | None = None, path: str | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}, column {column})"
        elif path:
            loc = f" (at {path})"
        super().__init__(message + loc)
        self.line = line
        self.column = column
        self.path = path


class OperationFailure(Exception):
    """Raised by a leaf operation to fail with a reason."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class OperationBinding:
    operation_name: str
    parameters: dict = field(default_factory=dict)


@dataclass
class BTNode:
    id: str
    kind: NodeKind
    children: list["BTNode"] = field(default_factory=list)
    operation: OperationBinding | None = None
    status: NodeStatus = NodeStatus.IDLE

    def node_count(self) -> int:
        return 1 + sum(c.node_count() for c in self.children)

    def leaf_count(self) -> int:
        if self.kind is NodeKind.LEAF:
            return 1
        return sum(c.leaf_count() for c in self.children)


def iter_nodes(node: BTNode) -> Iterator[BTNode]:
    yield node
    for child in node.children:
        yield from iter_nodes(child)


def serialize_tree(node: BTNode) -> dict:
    doc: dict = {"id": node.id, "kind": node.kind.value}
    if node.operation is not None:
        doc["operation"] = node.operation.operation_name
        doc["parameters"] = dict(node.operation.parameters)
    doc["children"] = [serialize_tree(c) for c in node.children]
    return doc


def _parse_node(doc, path: str, seen_ids: set[str]) -> BTNode:
    if not isinstance(doc, dict):
        raise TreeParseError("tree node must be an object", path=path)
    node_id = doc.get("id")
    if not isinstance(node_id, str) or not node_id:
        raise TreeParseError("node is missing a string 'id'", path=path)
    if node_id in seen_ids:
        raise TreeParseError(f"duplicate node id {node_id!r}", path=path)
    seen_ids.add(node_id)
    try:
        kind = NodeKind(doc.get("kind"))
    except ValueError:
        raise TreeParseError(f"unknown node kind {doc.get('kind')!r}", path=path) from None
    children_doc = doc.get("children", [])
    if not isinstance(children_doc, list):
        raise TreeParseError("'children' must be a list", path=path)
    children = [
        _parse_node(child, f"{path}/children/{i}", seen_ids) for i, child in enumerate(children_doc)
    ]
    operation = None
    if kind is NodeKind.LEAF:
        if children:
            raise TreeParseError("leaf nodes cannot have children", path=path)
        op_name = doc.get("operation")
        if not isinstance(op_name, str) or not op_name:
            raise TreeParseError("leaf node needs an 'operation'", path=path)
        params = doc.get("parameters", {})
        if not isinstance(params, dict):
            raise TreeParseError("'parameters' must be an object", path=path)
        operation = OperationBinding(op_name, dict(params))
    else:
        if doc.get("operation") is not None:
            raise TreeParseError("composite nodes cannot bind an operation", path=path)
        if len(children) < 1:
            raise TreeParseError(f"{kind.value} needs at least one child", path=path)
    return BTNode(id=node_id, kind=kind, children=children, operation=operation)


def deserialize_tree(doc) -> BTNode:
    """Parse a tree document (JSON text or an already-decoded dict)."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as e:
            raise TreeParseError(f"invalid JSON: {e.msg}", line=e.lineno, column=e.colno) from None
    return _parse_node(doc, "", set())


@dataclass(frozen=True)
class Violation:
    node_id: str
    reason: str

    def to_dict(self) -> dict:
        return {"node_id": self.node_id, "reason": self.reason}


def validate(tree: BTNode, registry, profile=None, symbols=None) -> list[Violation]:
    """Static checks: operations exist, are allowed, and references resolve.

    ``symbols`` is the set of known symbol names (or None to skip symbol
    resolution); ``profile`` gates the allowed operation set.
    """
    from .knowledge import PredicateExpr  # local import to avoid a cycle

    violations = []
    for node in iter_nodes(tree):
        if node.kind is not NodeKind.LEAF:
            continue
        binding = node.operation
        spec = registry.operation(binding.operation_name)
        if spec is None:
            violations.append(Violation(node.id, f"unknown operation {binding.operation_name!r}"))
            continue
        if profile is not None and not profile.allows(binding.operation_name):
            violations.append(Violation(node.id, "operation not in condition profile"))
        for param_name, param_kind in spec.params:
            if param_name not in binding.parameters:
                violations.append(Violation(node.id, f"missing parameter {param_name!r}"))
                continue
            value = binding.parameters[param_name]
            if param_kind == "symbol":
                if symbols is not None and value not in symbols:
                    violations.append(Violation(node.id, f"unresolved symbol {value!r}"))
            elif param_kind == "expr":
                try:
                    PredicateExpr.parse(str(value))
                except ValueError as e:
                    violations.append(Violation(node.id, f"malformed predicate: {e}"))
            elif param_kind == "number":
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    violations.append(Violation(node.id, f"parameter {param_name!r} must be a number"))
    return violations


@dataclass(frozen=True)
class StatusEvent:
    node_id: str
    status: NodeStatus
    reason: str | None = None


class Executor:
    """Ticks one tree to completion; emits status events; memory semantics."""

    def __init__(self, tree: BTNode, start_operation: Callable[[OperationBinding], Iterator[NodeStatus]]):
        self.tree = tree
        self._start_operation = start_operation
        self._memory: dict[str, int] = {}
        self._leaf_runs: dict[str, Iterator[NodeStatus]] = {}
        self._listeners: list[Callable[[StatusEvent], None]] = []
        self.visit_log: list[str] = []
        self.leaf_executions = 0
        self.result: NodeStatus | None = None

    def add_listener(self, fn: Callable[[StatusEvent], None]) -> None:
        self._listeners.append(fn)

    def _emit(self, node: BTNode, status: NodeStatus, reason: str | None = None) -> None:
        node.status = status
        event = StatusEvent(node.id, status, reason)
        for fn in self._listeners:
            fn(event)

    def reset(self) -> None:
        self._memory.clear()
        self._leaf_runs.clear()
        self.visit_log.clear()
        self.leaf_executions = 0
        self.result = None
        for node in iter_nodes(self.tree):
            node.status = NodeStatus.IDLE

    @property
    def finished(self) -> bool:
        return self.result is not None

    def tick(self) -> NodeStatus:
        """One tick of the whole tree. Idempotent once finished."""
        if self.result is not None:
            return self.result
        status = self._tick_node(self.tree)
        if status in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            self.result = status
        return status

    def stop(self) -> None:
        """Abandon in-flight leaves; used when a run is halted externally."""
        self._leaf_runs.clear()

    def _tick_node(self, node: BTNode) -> NodeStatus:
        self.visit_log.append(node.id)
        if node.status is not NodeStatus.RUNNING:
            self._emit(node, NodeStatus.RUNNING)
        if node.kind is NodeKind.LEAF:
            return self._tick_leaf(node)
        return self._tick_composite(node)

    def _tick_leaf(self, node: BTNode) -> NodeStatus:
        try:
            run = self._leaf_runs.get(node.id)
            if run is None:
                run = self._start_operation(node.operation)
                self._leaf_runs[node.id] = run
                self.leaf_executions += 1
            status = next(run)
        except StopIteration:
            status = NodeStatus.SUCCESS
        except OperationFailure as failure:
            self._leaf_runs.pop(node.id, None)
            self._emit(node, NodeStatus.FAILURE, reason=failure.reason)
            return NodeStatus.FAILURE
        if status is NodeStatus.RUNNING:
            return NodeStatus.RUNNING
        self._leaf_runs.pop(node.id, None)
        if status not in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            raise RuntimeError(f"leaf {node.id} yielded invalid status {status!r}")
        self._emit(node, status)
        return status

    def _tick_composite(self, node: BTNode) -> NodeStatus:
        index = self._memory.get(node.id, 0)
        short_circuit = (
            NodeStatus.FAILURE if node.kind is NodeKind.SEQUENCE else NodeStatus.SUCCESS
        )
        while index < len(node.children):
            child_status = self._tick_node(node.children[index])
            if child_status is NodeStatus.RUNNING:
                self._memory[node.id] = index
                return NodeStatus.RUNNING
            if child_status is short_circuit:
                self._memory.pop(node.id, None)
                self._emit(node, child_status)
                return child_status
            index += 1
            self._memory[node.id] = index
        self._memory.pop(node.id, None)
        final = NodeStatus.SUCCESS if node.kind is NodeKind.SEQUENCE else NodeStatus.FAILURE
        self._emit(node, final)
        return final
