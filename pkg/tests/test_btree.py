import itertools
import json

import numpy as np
import pytest

from workcell.btree import (
    BTNode,
    Executor,
    NodeKind,
    NodeStatus,
    OperationBinding,
    OperationFailure,
    StatusEvent,
    TreeParseError,
    deserialize_tree,
    iter_nodes,
    serialize_tree,
    validate,
)
from workcell.conditions import PROFILES
from workcell.knowledge import ComponentEntry, ComponentRegistry, OperationSpec


def leaf(node_id, script="S", **params):
    """Leaf whose stub operation plays out `script` (e.g. 'RRS')."""
    return BTNode(node_id, NodeKind.LEAF, operation=OperationBinding("Stub", {"script": script, **params}))


def composite(node_id, kind, *children):
    return BTNode(node_id, kind, children=list(children))


class ScriptRunner:
    """Stub operation factory: scripts like 'RRS' drive leaf status per tick."""

    def __init__(self):
        self.started = []

    def __call__(self, binding: OperationBinding):
        self.started.append(binding)
        script = binding.parameters["script"]

        def run():
            for ch in script:
                if ch == "R":
                    yield NodeStatus.RUNNING
                elif ch == "S":
                    yield NodeStatus.SUCCESS
                    return
                elif ch == "F":
                    yield NodeStatus.FAILURE
                    return
                elif ch == "X":
                    raise OperationFailure("scripted failure")

        return run()


def run_to_completion(tree, max_ticks=100):
    runner = ScriptRunner()
    executor = Executor(tree, runner)
    events = []
    executor.add_listener(events.append)
    status = NodeStatus.RUNNING
    for _ in range(max_ticks):
        status = executor.tick()
        if status in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            break
    return status, executor, events, runner


def test_sequence_all_success():
    tree = composite("root", NodeKind.SEQUENCE, leaf("a"), leaf("b"))
    status, executor, _, runner = run_to_completion(tree)
    assert status is NodeStatus.SUCCESS
    assert len(runner.started) == 2


def test_sequence_short_circuits_on_failure():
    tree = composite("root", NodeKind.SEQUENCE, leaf("a", "F"), leaf("b"))
    status, executor, _, runner = run_to_completion(tree)
    assert status is NodeStatus.FAILURE
    assert len(runner.started) == 1  # second child never ticked
    assert "b" not in executor.visit_log


def test_selector_takes_first_success():
    tree = composite("root", NodeKind.SELECTOR, leaf("a", "F"), leaf("b", "S"))
    status, _, _, runner = run_to_completion(tree)
    assert status is NodeStatus.SUCCESS
    assert len(runner.started) == 2


def test_selector_success_short_circuits():
    tree = composite("root", NodeKind.SELECTOR, leaf("a", "S"), leaf("b"))
    status, executor, _, runner = run_to_completion(tree)
    assert status is NodeStatus.SUCCESS
    assert len(runner.started) == 1
    assert "b" not in executor.visit_log


def test_truth_tables_width_three():
    """Exhaustive S/F outcomes for both composites up to width 3."""
    for kind in (NodeKind.SEQUENCE, NodeKind.SELECTOR):
        for width in (1, 2, 3):
            for outcomes in itertools.product("SF", repeat=width):
                tree = composite(
                    "root", kind, *(leaf(f"c{i}", o) for i, o in enumerate(outcomes))
                )
                status, executor, _, _ = run_to_completion(tree)
                if kind is NodeKind.SEQUENCE:
                    expected = NodeStatus.SUCCESS if all(o == "S" for o in outcomes) else NodeStatus.FAILURE
                    cut = next((i for i, o in enumerate(outcomes) if o == "F"), width - 1)
                else:
                    expected = NodeStatus.SUCCESS if any(o == "S" for o in outcomes) else NodeStatus.FAILURE
                    cut = next((i for i, o in enumerate(outcomes) if o == "S"), width - 1)
                assert status is expected
                visited = {v for v in executor.visit_log if v.startswith("c")}
                assert visited == {f"c{i}" for i in range(cut + 1)}


def test_running_leaf_keeps_composite_running():
    tree = composite("root", NodeKind.SEQUENCE, leaf("a", "RRS"), leaf("b"))
    runner = ScriptRunner()
    executor = Executor(tree, runner)
    assert executor.tick() is NodeStatus.RUNNING
    assert tree.status is NodeStatus.RUNNING
    assert executor.tick() is NodeStatus.RUNNING
    assert executor.tick() is NodeStatus.SUCCESS


def test_memory_resume_does_not_rerun_succeeded_siblings():
    tree = composite("root", NodeKind.SEQUENCE, leaf("a", "S"), leaf("b", "RRS"))
    runner = ScriptRunner()
    executor = Executor(tree, runner)
    while executor.tick() is NodeStatus.RUNNING:
        pass
    # leaf a started exactly once even though b needed three ticks
    assert [b.parameters["script"] for b in runner.started] == ["S", "RRS"]
    assert executor.leaf_executions == 2


def test_event_log_prefix_consistent():
    tree = composite(
        "root",
        NodeKind.SEQUENCE,
        leaf("a", "RS"),
        composite("sel", NodeKind.SELECTOR, leaf("b", "F"), leaf("c", "S")),
    )
    status, _, events, _ = run_to_completion(tree)
    assert status is NodeStatus.SUCCESS
    seen_running = set()
    for event in events:
        if event.status is NodeStatus.RUNNING:
            seen_running.add(event.node_id)
        elif event.status in (NodeStatus.SUCCESS, NodeStatus.FAILURE):
            assert event.node_id in seen_running


def test_operation_failure_reason_reported():
    tree = composite("root", NodeKind.SEQUENCE, leaf("a", "X"))
    status, _, events, _ = run_to_completion(tree)
    assert status is NodeStatus.FAILURE
    failures = [e for e in events if e.status is NodeStatus.FAILURE and e.node_id == "a"]
    assert failures and failures[0].reason == "scripted failure"


def test_random_trees_never_visit_past_short_circuit():
    rng = np.random.default_rng(55)
    counter = itertools.count()

    def random_tree(depth):
        if depth == 0 or rng.random() < 0.4:
            return leaf(f"n{next(counter)}", rng.choice(["S", "F", "RS", "RF"]))
        kind = NodeKind.SEQUENCE if rng.random() < 0.5 else NodeKind.SELECTOR
        children = [random_tree(depth - 1) for _ in range(int(rng.integers(1, 4)))]
        return BTNode(f"n{next(counter)}", kind, children=children)

    for _ in range(60):
        tree = random_tree(5)
        status, executor, _, _ = run_to_completion(tree, max_ticks=500)
        assert status in (NodeStatus.SUCCESS, NodeStatus.FAILURE)
        # reconstruct per-composite visit order: children visited after a
        # short-circuiting child within the same composite are violations
        for node in iter_nodes(tree):
            if node.kind is NodeKind.LEAF:
                continue
            cut = None
            for i, child in enumerate(node.children):
                short = NodeStatus.FAILURE if node.kind is NodeKind.SEQUENCE else NodeStatus.SUCCESS
                if child.status is short:
                    cut = i
                    break
            if cut is not None:
                for later in node.children[cut + 1 :]:
                    assert later.status is NodeStatus.IDLE


def reference_tree_doc():
    """Root sequence with detect, grasp and release leaves."""
    return {
        "id": "root",
        "kind": "sequence",
        "children": [
            {"id": "detect", "kind": "leaf", "operation": "DetectObjects", "parameters": {}},
            {
                "id": "grasp",
                "kind": "leaf",
                "operation": "SmartGrasp",
                "parameters": {"query": "class=node & region=RIGHT_OF@table", "grasp": "grasp_node", "backoff": 0.05},
            },
            {
                "id": "release",
                "kind": "leaf",
                "operation": "SmartRelease",
                "parameters": {"query": "any", "place": "place_spot", "backoff": 0.05},
            },
        ],
    }


def test_serialize_round_trip_single_leaf():
    tree = deserialize_tree({"id": "only", "kind": "leaf", "operation": "OpenGripper", "parameters": {}})
    doc = serialize_tree(tree)
    again = deserialize_tree(doc)
    assert serialize_tree(again) == doc


def test_serialize_round_trip_reference_tree():
    doc = reference_tree_doc()
    tree = deserialize_tree(json.dumps(doc))
    tree.children[0].status = NodeStatus.SUCCESS  # statuses must not leak into the document
    round_tripped = deserialize_tree(serialize_tree(tree))
    assert serialize_tree(round_tripped) == serialize_tree(tree)
    assert all(n.status is NodeStatus.IDLE for n in iter_nodes(round_tripped))


def test_duplicate_ids_rejected():
    doc = {
        "id": "root",
        "kind": "sequence",
        "children": [
            {"id": "x", "kind": "leaf", "operation": "OpenGripper"},
            {"id": "x", "kind": "leaf", "operation": "CloseGripper"},
        ],
    }
    with pytest.raises(TreeParseError, match="duplicate"):
        deserialize_tree(doc)


def test_malformed_json_reports_position():
    with pytest.raises(TreeParseError) as err:
        deserialize_tree('{"id": "root", "kind": }')
    assert err.value.line == 1
    assert err.value.column is not None


def test_empty_composite_rejected():
    with pytest.raises(TreeParseError, match="at least one child"):
        deserialize_tree({"id": "root", "kind": "sequence", "children": []})


@pytest.fixture
def registry():
    return ComponentRegistry(
        (
            ComponentEntry(
                name="arm",
                operations=(
                    OperationSpec("MoveToWaypoint", "arm", (("target", "symbol"),)),
                    OperationSpec("SmartGrasp", "arm", (("query", "expr"), ("grasp", "symbol"), ("backoff", "number"))),
                ),
            ),
        )
    )


def test_validate_flags_out_of_profile_operation(registry):
    tree = deserialize_tree(
        {
            "id": "root",
            "kind": "sequence",
            "children": [
                {
                    "id": "g",
                    "kind": "leaf",
                    "operation": "SmartGrasp",
                    "parameters": {"query": "class=node", "grasp": "gp", "backoff": 0.05},
                }
            ],
        }
    )
    violations = validate(tree, registry, PROFILES[1], symbols={"gp"})
    assert any(v.reason == "operation not in condition profile" and v.node_id == "g" for v in violations)
    assert not validate(tree, registry, PROFILES[4], symbols={"gp"})


def test_validate_allows_in_profile_waypoint_move(registry):
    tree = deserialize_tree(
        {
            "id": "root",
            "kind": "sequence",
            "children": [
                {"id": "m", "kind": "leaf", "operation": "MoveToWaypoint", "parameters": {"target": "wp1"}}
            ],
        }
    )
    assert validate(tree, registry, PROFILES[1], symbols={"wp1"}) == []


def test_validate_flags_unresolved_symbol(registry):
    tree = deserialize_tree(
        {
            "id": "root",
            "kind": "sequence",
            "children": [
                {"id": "m", "kind": "leaf", "operation": "MoveToWaypoint", "parameters": {"target": "nowhere"}}
            ],
        }
    )
    violations = validate(tree, registry, PROFILES[1], symbols={"wp1"})
    assert any("unresolved symbol" in v.reason for v in violations)


def test_validate_flags_unknown_operation(registry):
    tree = deserialize_tree(
        {"id": "root", "kind": "sequence", "children": [{"id": "m", "kind": "leaf", "operation": "Teleport"}]}
    )
    violations = validate(tree, registry, PROFILES[1])
    assert any("unknown operation" in v.reason for v in violations)
