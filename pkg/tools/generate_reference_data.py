#!/usr/bin/env python3
"""Regenerate the shipped scenes, teach scripts, and reference trees.

The reference trees encode the same plans a demonstrator would build live:
baseline trees servo through taught waypoints, planning trees disable target
collisions and plan, perception trees track object-relative waypoints, and
the capability-4 trees use the query-driven grasp and release composites.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from workcell.geometry import Pose

DATA = Path(__file__).parent.parent / "src" / "workcell" / "data"
TOP_DOWN = [0.0, 0.7071067811865476, 0.0, 0.7071067811865476]  # EE x-axis straight down
STANDING = [0.0, 0.7071067811865476, 0.0, 0.7071067811865476]  # long axis vertical

NODE_Z = 0.025
LINK_FLAT_Z = 0.015
LINK_STANDING_Z = 0.075
HOVER = 0.12
HIGH = 0.30

PLACE_SPOTS = {"p1": (0.40, 0.22), "p2": (0.54, 0.30)}


def pose_dict(xyz, quat=(0.0, 0.0, 0.0, 1.0)):
    return {"translation": [float(v) for v in xyz], "rotation": [float(v) for v in quat]}


def yaw_quat(angle):
    return [0.0, 0.0, math.sin(angle / 2.0), math.cos(angle / 2.0)]


def scene_doc(scene_id, objects, task):
    return {
        "id": scene_id,
        "table": pose_dict((0.45, 0.0, 0.0)),
        "workspace": {"center": [0.45, 0.0], "radius": 0.4},
        "bounds": {"radius": 1.05, "z_range": [0.0, 1.45], "center": [0.0, 0.0]},
        "classes": {
            "node": {"dims": [0.05, 0.05, 0.05], "symmetry": "z4"},
            "link": {"dims": [0.15, 0.03, 0.03], "symmetry": "z2"},
        },
        "objects": objects,
        "task": task,
    }


TASKS = {
    "task1": scene_doc(
        "task1",
        [
            {"class": "node", "pose": pose_dict((0.42, -0.18, NODE_Z))},
            {"class": "node", "pose": pose_dict((0.54, -0.26, NODE_Z))},
            {"class": "link", "pose": pose_dict((0.28, 0.32, LINK_STANDING_Z), STANDING)},
        ],
        {"required_moves": 2, "stack_link": False, "protect_obstacle": True},
    ),
    "task2": scene_doc(
        "task2",
        [
            {"class": "node", "pose": pose_dict((0.42, -0.18, NODE_Z))},
            {"class": "node", "pose": pose_dict((0.56, -0.30, NODE_Z))},
            {"class": "link", "pose": pose_dict((0.48, 0.02, LINK_STANDING_Z), STANDING)},
        ],
        {"required_moves": 2, "stack_link": False, "protect_obstacle": True},
    ),
    "task3": scene_doc(
        "task3",
        [
            {"class": "node", "pose": pose_dict((0.40, -0.10, NODE_Z))},
            {"class": "node", "pose": pose_dict((0.52, -0.22, NODE_Z))},
            {"class": "node", "pose": pose_dict((0.60, -0.08, NODE_Z))},
            {"class": "link", "pose": pose_dict((0.30, 0.30, LINK_FLAT_Z), yaw_quat(0.5))},
        ],
        {"required_moves": 2, "stack_link": True, "protect_obstacle": False},
    ),
}


def node_positions(scene):
    return [o["pose"]["translation"] for o in scene["objects"] if o["class"] == "node"]


def link_pose(scene):
    for o in scene["objects"]:
        if o["class"] == "link":
            return Pose.from_dict(o["pose"])
    return None


def wp(name, xyz, quat=TOP_DOWN, frame="WORLD", kind="WAYPOINT"):
    return {"name": name, "kind": kind, "pose": pose_dict(xyz, quat), "reference_frame": frame}


def leaf(node_id, operation, **params):
    return {"id": node_id, "kind": "leaf", "operation": operation, "parameters": params}


def sequence(node_id, children):
    return {"id": node_id, "kind": "sequence", "children": children}


# ---------------------------------------------------------------- condition 1


def cond1_bundle(task):
    scene = TASKS[task]
    nodes = node_positions(scene)
    teach, children = [], [leaf("go_home", "MoveToHome")]
    for i, ((nx, ny, nz), spot) in enumerate(zip(nodes[:2], ("p1", "p2")), start=1):
        px, py = PLACE_SPOTS[spot]
        teach += [
            wp(f"grasp_{i}", (nx, ny, nz)),
            wp(f"hover_{i}", (nx, ny, nz + HOVER)),
            wp(f"high_{i}", (nx, ny, HIGH)),
            wp(f"drop_high_{i}", (px, py, HIGH)),
            wp(f"drop_hover_{i}", (px, py, NODE_Z + HOVER)),
            wp(f"drop_{i}", (px, py, NODE_Z + 0.003)),
        ]
        children += [
            leaf(f"approach_{i}", "MoveToWaypoint", target=f"hover_{i}"),
            leaf(f"reach_{i}", "MoveToWaypoint", target=f"grasp_{i}"),
            leaf(f"close_{i}", "CloseGripper"),
            leaf(f"lift_{i}", "MoveToWaypoint", target=f"hover_{i}"),
            leaf(f"raise_{i}", "MoveToWaypoint", target=f"high_{i}"),
            leaf(f"carry_{i}", "MoveToWaypoint", target=f"drop_high_{i}"),
            leaf(f"lower_{i}", "MoveToWaypoint", target=f"drop_hover_{i}"),
            leaf(f"set_{i}", "MoveToWaypoint", target=f"drop_{i}"),
            leaf(f"open_{i}", "OpenGripper"),
            leaf(f"retreat_{i}", "MoveToWaypoint", target=f"drop_hover_{i}"),
        ]
    children.append(leaf("finish_home", "MoveToHome"))
    return {"scenario": task, "condition": 1, "teach": teach, "tree": sequence("root", children)}


# ---------------------------------------------------------------- condition 2


def cond2_bundle(task):
    scene = TASKS[task]
    nodes = node_positions(scene)
    teach, children = [], [
        leaf("go_home", "PlanToHome"),
        leaf("scan", "DetectObjects"),
        leaf("free_node_0", "DisableCollisions", object="node_0"),
        leaf("free_node_1", "DisableCollisions", object="node_1"),
    ]
    for i, ((nx, ny, nz), spot) in enumerate(zip(nodes[:2], ("p1", "p2")), start=1):
        px, py = PLACE_SPOTS[spot]
        teach += [
            wp(f"grasp_{i}", (nx, ny, nz)),
            wp(f"hover_{i}", (nx, ny, nz + HOVER)),
            wp(f"drop_hover_{i}", (px, py, NODE_Z + HOVER)),
            wp(f"drop_{i}", (px, py, NODE_Z + 0.003)),
        ]
        children += [
            leaf(f"approach_{i}", "PlanToWaypoint", target=f"hover_{i}"),
            leaf(f"reach_{i}", "PlanToWaypoint", target=f"grasp_{i}"),
            leaf(f"close_{i}", "CloseGripper"),
            leaf(f"lift_{i}", "PlanToWaypoint", target=f"drop_hover_{i}"),
            leaf(f"set_{i}", "PlanToWaypoint", target=f"drop_{i}"),
            leaf(f"open_{i}", "OpenGripper"),
            leaf(f"retreat_{i}", "PlanToWaypoint", target=f"drop_hover_{i}"),
        ]
    children.append(leaf("finish_home", "PlanToHome"))
    return {"scenario": task, "condition": 2, "teach": teach, "tree": sequence("root", children)}


# ---------------------------------------------------------------- condition 3


def cond3_bundle(task):
    scene = TASKS[task]
    link = link_pose(scene)
    teach, children = [], [leaf("go_home", "MoveToHome"), leaf("scan", "DetectObjects")]
    for i, sid in enumerate(("node_0", "node_1"), start=1):
        px, py = PLACE_SPOTS["p1" if i == 1 else "p2"]
        # grasp offsets taught in the detected object's frame
        teach += [
            wp(f"grasp_{i}", (0, 0, 0), TOP_DOWN, frame=sid),
            wp(f"hover_{i}", (0, 0, HOVER), TOP_DOWN, frame=sid),
        ]
        # place poses taught relative to the detected link
        for suffix, z in (("", NODE_Z + 0.003), ("_hover", NODE_Z + HOVER)):
            world_pose = Pose(np.array([px, py, z]), np.asarray(TOP_DOWN))
            rel = link.inverse().compose(world_pose)
            teach.append(
                {
                    "name": f"drop_{i}{suffix}",
                    "kind": "WAYPOINT",
                    "pose": rel.to_dict(),
                    "reference_frame": "link_0",
                }
            )
        children += [
            leaf(f"approach_{i}", "MoveRelativeToObject", target=f"hover_{i}"),
            leaf(f"reach_{i}", "MoveRelativeToObject", target=f"grasp_{i}"),
            leaf(f"close_{i}", "CloseGripper"),
            leaf(f"lift_{i}", "MoveRelativeToObject", target=f"hover_{i}"),
            leaf(f"carry_home_{i}", "MoveToHome"),
            leaf(f"lower_{i}", "MoveRelativeToObject", target=f"drop_{i}_hover"),
            leaf(f"set_{i}", "MoveRelativeToObject", target=f"drop_{i}"),
            leaf(f"open_{i}", "OpenGripper"),
            leaf(f"retreat_{i}", "MoveRelativeToObject", target=f"drop_{i}_hover"),
        ]
    children.append(leaf("finish_home", "MoveToHome"))
    return {"scenario": task, "condition": 3, "teach": teach, "tree": sequence("root", children)}


# ---------------------------------------------------------------- condition 4


def cond4_bundle(task):
    stack = TASKS[task]["task"]["stack_link"]
    teach = [
        wp("grasp_node", (0, 0, 0), TOP_DOWN, frame="node"),
        wp("left_spot_1", (*PLACE_SPOTS["p1"], NODE_Z), TOP_DOWN),
        wp("left_spot_2", (*PLACE_SPOTS["p2"], NODE_Z), TOP_DOWN),
    ]
    children = []
    for i in (1, 2):
        children += [
            leaf(f"home_{i}", "PlanToHome"),
            leaf(f"scan_{i}", "DetectObjects"),
            leaf(
                f"pick_{i}",
                "SmartGrasp",
                query="class=node & region=RIGHT_OF@table",
                grasp="grasp_node",
                backoff=0.08,
            ),
            leaf(f"place_{i}", "SmartRelease", query="any", place=f"left_spot_{i}", backoff=0.08),
        ]
    if stack:
        teach += [
            wp("grasp_link", (0, 0, 0), TOP_DOWN, frame="link"),
            wp("stack_on_node", (0, 0, 0.04), TOP_DOWN, frame="node"),
        ]
        children += [
            leaf("home_3", "PlanToHome"),
            leaf("scan_3", "DetectObjects"),
            leaf("pick_link", "SmartGrasp", query="class=link", grasp="grasp_link", backoff=0.05),
            leaf(
                "stack_link",
                "SmartRelease",
                query="class=node & region=LEFT_OF@table",
                place="stack_on_node",
                backoff=0.08,
            ),
        ]
    return {"scenario": task, "condition": 4, "teach": teach, "tree": sequence("root", children)}


# ---------------------------------------------------------------- corridor


def corridor_scene():
    from workcell.kinematics import forward_kinematics, inverse_kinematics
    from workcell.runner import default_chain

    chain = default_chain()
    q_start = inverse_kinematics(
        chain, Pose((0.45, -0.25, 0.25), np.asarray(TOP_DOWN)), chain.home_q
    )
    assert q_start is not None
    swing = np.zeros(chain.dof)
    swing[0] = -1.0
    q_goal = q_start + swing
    mid = forward_kinematics(chain, q_start + 0.5 * swing).translation
    doc = {
        "id": "corridor",
        "table": pose_dict((0.45, 0.0, 0.0)),
        "workspace": {"center": [0.45, 0.0], "radius": 0.5},
        "bounds": {"radius": 1.05, "z_range": [0.0, 1.45], "center": [0.0, 0.0]},
        "classes": {"wall": {"dims": [0.1, 0.1, 0.4], "graspable": False, "detectable": False}},
        "objects": [
            {"class": "wall", "pose": pose_dict((mid[0], mid[1], 0.25)), "dims": [0.1, 0.1, 0.4]}
        ],
        "task": {"required_moves": 0},
        "queries": [
            {"start": [float(v) for v in q_start], "goal": [float(v) for v in q_goal]}
        ],
    }
    return doc


def main():
    (DATA / "scenes").mkdir(parents=True, exist_ok=True)
    (DATA / "trees").mkdir(parents=True, exist_ok=True)
    for name, doc in TASKS.items():
        (DATA / "scenes" / f"{name}.scene").write_text(json.dumps(doc, indent=2) + "\n")
    (DATA / "scenes" / "corridor.scene").write_text(json.dumps(corridor_scene(), indent=2) + "\n")

    bundles = {
        "task1_cond1": cond1_bundle("task1"),
        "task1_cond2": cond2_bundle("task1"),
        "task1_cond3": cond3_bundle("task1"),
        "task1_cond4": cond4_bundle("task1"),
        "task2_cond1": cond1_bundle("task2"),
        "task2_cond2": cond2_bundle("task2"),
        "task2_cond4": cond4_bundle("task2"),
        "task3_cond4": cond4_bundle("task3"),
    }
    for name, bundle in bundles.items():
        (DATA / "trees" / f"{name}.json").write_text(json.dumps(bundle, indent=2) + "\n")
    print(f"wrote {len(TASKS) + 1} scenes and {len(bundles)} tree bundles under {DATA}")


if __name__ == "__main__":
    main()
