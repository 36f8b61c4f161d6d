import math

import numpy as np
import pytest

from workcell.collision import ObstacleBox, PlanningScene, WorkspaceBounds, collision_check
from workcell.geometry import Pose, joint_distance, rotation_distance, translation_distance
from workcell.kinematics import DimensionError, forward_kinematics, inverse_kinematics
from workcell.knowledge import (
    ClassAtom,
    ComponentEntry,
    ComponentRegistry,
    CostWeights,
    DetectedObject,
    KnowledgeError,
    KnowledgeStore,
    OperationSpec,
    PredicateExpr,
    Region,
    RegionAtom,
    SymbolEntry,
    SymbolKind,
    WorldSnapshot,
    compute_cost,
    expr_matches,
    knowledge_test,
    pose_query,
)

TOP_DOWN = Pose.rot_y(math.pi / 2).rotation
TABLE = Pose.from_translation(0.45, 0.0, 0.0)
OPEN_SCENE = PlanningScene(bounds=WorkspaceBounds(radius=10.0, z_range=(-10.0, 10.0)), table_z=-10.0)


def z_symmetries(count):
    return tuple(Pose.rot_z(2.0 * math.pi * k / count) for k in range(count))


def obj(obj_id, object_class, xyz, yaw=0.0, syms=1):
    return DetectedObject(obj_id, object_class, Pose.from_axis_angle([0, 0, 1], yaw, xyz), z_symmetries(syms))


# ---------------------------------------------------------------- predicates


def test_predicate_parse_print_round_trip():
    text = "class=node & region=RIGHT_OF@table"
    expr = PredicateExpr.parse(text)
    assert expr.atoms == (ClassAtom("node"), RegionAtom(Region.RIGHT_OF, "table"))
    assert expr.format() == text
    assert PredicateExpr.parse(expr.format()) == expr


def test_predicate_parse_any():
    assert PredicateExpr.parse("any") == PredicateExpr(())
    assert PredicateExpr(()).format() == "any"


@pytest.mark.parametrize("bad", ["class=", "region=LEFT_OF", "region=NORTH_OF@table", "sound=loud", "class"])
def test_predicate_parse_errors(bad):
    with pytest.raises(ValueError):
        PredicateExpr.parse(bad)


def test_region_half_space_semantics():
    world = WorldSnapshot(objects=(), frames={"table": TABLE})
    left = obj("a", "node", (0.45, 0.2, 0.0))
    right = obj("b", "node", (0.45, -0.2, 0.0))
    assert expr_matches(PredicateExpr.parse("region=LEFT_OF@table"), left, world)
    assert not expr_matches(PredicateExpr.parse("region=LEFT_OF@table"), right, world)
    assert expr_matches(PredicateExpr.parse("region=RIGHT_OF@table"), right, world)
    front = obj("c", "node", (0.6, 0.0, 0.0))
    assert expr_matches(PredicateExpr.parse("region=IN_FRONT_OF@table"), front, world)
    assert expr_matches(PredicateExpr.parse("region=BEHIND@table"), obj("d", "node", (0.3, 0, 0)), world)
    assert expr_matches(PredicateExpr.parse("region=ABOVE@table"), obj("e", "node", (0.45, 0, 0.2)), world)
    assert expr_matches(PredicateExpr.parse("region=BELOW@table"), obj("f", "node", (0.45, 0, -0.2)), world)


def test_knowledge_test_class_mismatch_false():
    world = WorldSnapshot(objects=(obj("l1", "link", (0.4, 0.1, 0)),))
    assert not knowledge_test(PredicateExpr.parse("class=node"), world)
    assert knowledge_test(PredicateExpr.parse("class=link"), world)


def test_knowledge_test_unresolvable_frame_is_error_not_false():
    world = WorldSnapshot(objects=(obj("n1", "node", (0.4, 0.1, 0)),))
    with pytest.raises(KnowledgeError):
        knowledge_test(PredicateExpr.parse("region=LEFT_OF@ghost_frame"), world)


def test_knowledge_test_region_occupancy():
    # region occupied after an object lands there
    world_empty = WorldSnapshot(objects=(obj("n1", "node", (0.45, -0.2, 0)),), frames={"table": TABLE})
    query = PredicateExpr.parse("class=node & region=LEFT_OF@table")
    assert not knowledge_test(query, world_empty)
    world_after = WorldSnapshot(objects=(obj("n1", "node", (0.45, 0.2, 0)),), frames={"table": TABLE})
    assert knowledge_test(query, world_after)


def test_knowledge_test_monotone_under_object_addition():
    rng = np.random.default_rng(60)
    frames = {"table": TABLE}
    exprs = [
        PredicateExpr.parse("any"),
        PredicateExpr.parse("class=node"),
        PredicateExpr.parse("class=node & region=LEFT_OF@table"),
        PredicateExpr.parse("region=ABOVE@table"),
    ]
    for _ in range(50):
        objs = [
            obj(f"o{i}", rng.choice(["node", "link"]), rng.uniform(-0.5, 0.5, size=3))
            for i in range(int(rng.integers(0, 4)))
        ]
        extra = obj("extra", "node", rng.uniform(-0.5, 0.5, size=3))
        for expr in exprs:
            before = knowledge_test(expr, WorldSnapshot(tuple(objs), frames))
            after = knowledge_test(expr, WorldSnapshot(tuple(objs + [extra]), frames))
            assert after or not before  # TRUE never flips to FALSE


# ---------------------------------------------------------------- cost


def test_compute_cost_zero_case():
    assert compute_cost(0, 0, 0, False, CostWeights()) == 0.0


def test_compute_cost_weighted_sum():
    w = CostWeights(1.0, 1.0, 1.0, 1e4)
    assert compute_cost(0.5, 0.2, 0.1, False, w) == pytest.approx(0.8, abs=1e-12)
    assert compute_cost(0.5, 0.2, 0.1, True, w) == pytest.approx(10000.8, abs=1e-9)


def test_cost_weights_validation():
    with pytest.raises(ValueError):
        CostWeights(w_q=-1.0)


def test_cost_weights_penalty_must_dominate(chain):
    CostWeights(penalty=1e4).validate_against(chain, workspace_diameter=2.0)
    with pytest.raises(ValueError):
        CostWeights(penalty=1.0).validate_against(chain, workspace_diameter=2.0)


# ---------------------------------------------------------------- pose query


GRASP_OFFSET = Pose(np.zeros(3), TOP_DOWN)  # end-effector at object origin, pointing down


def oracle_pose_query(chain, objects, expr, q, scene, ee_offset, weights):
    """Brute force: enumerate every (object, symmetry), recompute, sort."""
    current = forward_kinematics(chain, q)
    rows = []
    for o in objects:
        if not expr_matches(expr, o, WorldSnapshot(tuple(objects))):
            continue
        for k, sym in enumerate(o.symmetries):
            goal = o.pose.compose(sym).compose(ee_offset)
            solution = inverse_kinematics(chain, goal, q)
            if solution is None:
                continue
            hit = collision_check(chain, solution, scene.with_disabled({o.id}))
            cost = (
                weights.w_q * joint_distance(solution, q)
                + weights.w_t * translation_distance(goal, current)
                + weights.w_R * rotation_distance(goal, current)
                + (weights.penalty if hit else 0.0)
            )
            rows.append((cost, o.id, k, hit))
    return sorted(rows)


def test_pose_query_empty_world(chain):
    out = pose_query(chain, [], PredicateExpr.parse("any"), chain.home_q, OPEN_SCENE, GRASP_OFFSET, CostWeights())
    assert out == []


def test_pose_query_dimension_error(chain):
    with pytest.raises(DimensionError):
        pose_query(
            chain, [obj("n1", "node", (0.4, 0, 0.2))], PredicateExpr.parse("any"),
            [0.0, 0.0], OPEN_SCENE, GRASP_OFFSET, CostWeights(),
        )


def test_pose_query_four_fold_symmetry_matches_oracle(chain):
    objects = [obj("n1", "node", (0.45, -0.15, 0.25), yaw=0.3, syms=4)]
    expr = PredicateExpr.parse("class=node")
    out = pose_query(chain, objects, expr, chain.home_q, OPEN_SCENE, GRASP_OFFSET, CostWeights())
    assert len(out) == 4
    assert [c.cost for c in out] == sorted(c.cost for c in out)
    expected = oracle_pose_query(chain, objects, expr, chain.home_q, OPEN_SCENE, GRASP_OFFSET, CostWeights())
    assert len(expected) == 4
    for got, (cost, oid, k, hit) in zip(out, expected):
        assert got.object_id == oid
        assert got.symmetry_index == k
        assert got.cost == pytest.approx(cost, abs=1e-9)
        assert got.in_collision == hit


def test_pose_query_filters_class_and_region(chain):
    world_frames_table = Pose.from_translation(0.45, 0.0, 0.25)
    objects = [
        obj("n_left", "node", (0.45, 0.2, 0.25)),
        obj("n_right", "node", (0.45, -0.2, 0.25)),
        obj("l_left", "link", (0.35, 0.15, 0.25)),
    ]
    expr = PredicateExpr.parse("class=node & region=LEFT_OF@table")
    world = WorldSnapshot(tuple(objects), frames={"table": world_frames_table})
    out = pose_query(
        chain, objects, expr, chain.home_q, OPEN_SCENE, GRASP_OFFSET, CostWeights(), world=world
    )
    assert {c.object_id for c in out} == {"n_left"}


def test_pose_query_randomized_matches_oracle(chain):
    rng = np.random.default_rng(61)
    weights = CostWeights()
    for _ in range(25):
        n_objects = int(rng.integers(1, 4))
        objects = []
        for i in range(n_objects):
            radius = rng.uniform(0.3, 0.55)
            angle = rng.uniform(-1.2, 1.2)
            xyz = (radius * math.cos(angle), radius * math.sin(angle), rng.uniform(0.1, 0.4))
            objects.append(
                obj(f"o{i}", rng.choice(["node", "link"]), xyz, yaw=rng.uniform(0, 6.28), syms=int(rng.choice([1, 2, 4, 8])))
            )
        expr = PredicateExpr.parse(str(rng.choice(["any", "class=node", "class=link"])))
        out = pose_query(chain, objects, expr, chain.home_q, OPEN_SCENE, GRASP_OFFSET, weights)
        expected = oracle_pose_query(chain, objects, expr, chain.home_q, OPEN_SCENE, GRASP_OFFSET, weights)
        assert len(out) == len(expected)
        for got, (cost, oid, k, hit) in zip(out, expected):
            assert (got.object_id, got.symmetry_index) == (oid, k)
            assert got.cost == pytest.approx(cost, abs=1e-9)
            assert got.in_collision == hit


def test_pose_query_scaling_invariance(chain):
    objects = [
        obj("n1", "node", (0.45, -0.15, 0.25), syms=4),
        obj("n2", "node", (0.38, 0.22, 0.3), syms=2),
    ]
    expr = PredicateExpr.parse("class=node")
    base = pose_query(chain, objects, expr, chain.home_q, OPEN_SCENE, GRASP_OFFSET, CostWeights())
    order = [(c.object_id, c.symmetry_index) for c in base]
    for k in (0.25, 2.0, 10.0):
        scaled = pose_query(
            chain, objects, expr, chain.home_q, OPEN_SCENE, GRASP_OFFSET, CostWeights().scaled(k)
        )
        assert [(c.object_id, c.symmetry_index) for c in scaled] == order


def test_pose_query_collision_penalty_sorts_last(chain):
    blocked = obj("blocked", "node", (0.45, -0.2, 0.25), syms=1)
    clear = obj("clear", "node", (0.42, 0.24, 0.3), syms=1)
    # obstacle hanging right over the blocked object's approach
    obstacle = ObstacleBox("shelf", Pose.from_translation(0.45, -0.2, 0.33), [0.08, 0.08, 0.03])
    scene = PlanningScene(
        boxes=(obstacle,), bounds=WorkspaceBounds(radius=10.0, z_range=(-10.0, 10.0)), table_z=-10.0
    )
    out = pose_query(
        chain, [blocked, clear], PredicateExpr.parse("class=node"), chain.home_q, scene, GRASP_OFFSET, CostWeights()
    )
    assert len(out) == 2
    assert out[0].object_id == "clear" and not out[0].in_collision
    assert out[1].object_id == "blocked" and out[1].in_collision
    # monotonicity: growing penalty keeps colliding candidates behind clear ones
    for penalty in (1e4, 1e6, 1e8):
        ranked = pose_query(
            chain,
            [blocked, clear],
            PredicateExpr.parse("class=node"),
            chain.home_q,
            scene,
            GRASP_OFFSET,
            CostWeights(penalty=penalty),
        )
        positions = {c.object_id: i for i, c in enumerate(ranked)}
        assert positions["clear"] < positions["blocked"]


# ---------------------------------------------------------------- store


def test_register_and_list_symbols():
    store = KnowledgeStore()
    store.register_symbol(SymbolEntry("wp1", SymbolKind.WAYPOINT, Pose.from_translation(0.4, 0, 0.3)))
    assert [s.name for s in store.list_symbols()] == ["wp1"]


def test_register_duplicate_overwrites_with_latest_pose():
    store = KnowledgeStore()
    store.register_symbol(SymbolEntry("wp", SymbolKind.WAYPOINT, Pose.from_translation(1, 0, 0)))
    store.register_symbol(SymbolEntry("wp", SymbolKind.WAYPOINT, Pose.from_translation(2, 0, 0)))
    entries = store.list_symbols()
    assert len(entries) == 1
    assert entries[0].pose.translation[0] == 2.0


def test_home_name_reserved():
    store = KnowledgeStore()
    with pytest.raises(ValueError):
        store.register_symbol(SymbolEntry("home", SymbolKind.WAYPOINT, Pose.identity()))
    store.register_symbol(SymbolEntry("home", SymbolKind.HOME, Pose.identity()))


def test_stale_flag_after_redetection():
    store = KnowledgeStore()
    store.ingest_detection((obj("node_1", "node", (0.4, -0.2, 0.025)),))
    store.register_symbol(
        SymbolEntry("grasp_n1", SymbolKind.WAYPOINT, Pose.from_translation(0, 0, 0.1), reference_frame="node_1")
    )
    assert not store.symbols["grasp_n1"].stale
    store.ingest_detection((obj("node_7", "node", (0.4, -0.2, 0.025)),))
    assert store.symbols["grasp_n1"].stale
    # object symbols replaced by the new snapshot
    assert "node_1" not in store.symbols
    assert "node_7" in store.symbols


def test_resolve_symbol_pose_chases_object_frame():
    store = KnowledgeStore()
    store.ingest_detection((obj("node_1", "node", (0.4, -0.2, 0.1)),))
    store.register_symbol(
        SymbolEntry("hover", SymbolKind.WAYPOINT, Pose.from_translation(0, 0, 0.15), reference_frame="node_1")
    )
    world_pose = store.resolve_symbol_pose("hover")
    assert np.allclose(world_pose.translation, [0.4, -0.2, 0.25], atol=1e-12)
    with pytest.raises(KnowledgeError):
        store.resolve_symbol_pose("missing")


def test_registry_rejects_duplicate_operations():
    spec = OperationSpec("Op", "a")
    with pytest.raises(ValueError):
        ComponentRegistry(
            (ComponentEntry(name="a", operations=(spec,)), ComponentEntry(name="b", operations=(spec,)))
        )
