"""Command line interface: headless runs, the service, and a thin HTTP client."""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click

from .config import RunConfig
from .runner import SUITE_MATRIX, data_path, run_scenario, run_suite


def _load_json(path: str):
    return json.loads(data_path(path).read_text())


def _config(seed, rrt_max_iters, joint_speed, noise, timeout) -> RunConfig:
    cfg = RunConfig(seed=seed)
    return replace(
        cfg,
        rrt_max_iters=rrt_max_iters,
        joint_speed=joint_speed,
        detection_noise=noise,
        timeout_s=timeout,
    )


@click.group()
def main():
    """Behavior-tree task authoring for a simulated robot arm."""


@main.command()
@click.option("--tree", "tree_path", required=True, help="Tree document or bundle (path or shipped name)")
@click.option("--scene", "scene_path", required=True, help="Scenario document (path or shipped name)")
@click.option("--condition", type=click.IntRange(1, 4), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rrt-max-iters", type=int, default=10_000, show_default=True)
@click.option("--joint-speed", type=float, default=1.0, show_default=True)
@click.option("--noise", type=float, default=0.0, show_default=True, help="Detection pose noise sigma")
@click.option("--timeout", type=float, default=300.0, show_default=True, help="Simulated-seconds budget")
@click.option("--report", "report_path", type=click.Path(), default=None, help="Write the report JSON here")
def run(tree_path, scene_path, condition, seed, rrt_max_iters, joint_speed, noise, timeout, report_path):
    """Replay one tree against one scene and print the run report."""
    config = _config(seed, rrt_max_iters, joint_speed, noise, timeout)
    report = run_scenario(_load_json(tree_path), _load_json(scene_path), condition, config)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if report_path:
        Path(report_path).write_text(text + "\n")
    click.echo(text)
    sys.exit(0 if report.success else 1)


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--report", "report_path", type=click.Path(), default=None)
def suite(seed, report_path):
    """Run the full reference matrix and print a summary table."""
    reports = run_suite(RunConfig(seed=seed))
    rows = [r.to_dict() for r in reports]
    if report_path:
        Path(report_path).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    header = f"{'scenario':<9} {'cond':>4} {'status':<8} {'moved':>5} {'stacked':>7} {'disturbed':>9} {'sim_s':>7}"
    click.echo(header)
    click.echo("-" * len(header))
    for row in rows:
        click.echo(
            f"{row['scenario']:<9} {row['condition']:>4} {row['status']:<8} "
            f"{row['parts_moved']:>5} {str(row['link_stacked']):>7} "
            f"{str(row['obstacle_disturbed']):>9} {row['sim_duration_s']:>7.2f}"
        )
    failures = [r for r in rows if not r["success"]]
    click.echo(f"{len(rows) - len(failures)}/{len(rows)} scenario runs succeeded")
    sys.exit(0 if not failures else 1)


@main.command()
@click.option("--tree", "tree_path", required=True)
@click.option("--condition", type=click.IntRange(1, 4), required=True)
@click.option("--scene", "scene_path", default="task1.scene", show_default=True)
def check(tree_path, condition, scene_path):
    """Validate a tree against a condition profile without executing it."""
    from .btree import deserialize_tree, validate
    from .runner import build_session, parse_bundle

    bundle = parse_bundle(_load_json(tree_path))
    session = build_session(_load_json(scene_path), condition, RunConfig())
    from .runner import apply_teach

    apply_teach(session, bundle["teach"])
    tree = deserialize_tree(bundle["tree"])
    violations = validate(tree, session.registry, session.profile, symbols=set(session.store.symbols))
    for v in violations:
        click.echo(f"{v.node_id}: {v.reason}")
    click.echo("valid" if not violations else f"{len(violations)} violation(s)")
    sys.exit(0 if not violations else 1)


@main.command()
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--scene", default="task1.scene", show_default=True)
@click.option("--condition", type=click.IntRange(1, 4), default=4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--speed", type=float, default=1.0, show_default=True, help="Real-time factor; 0 = as fast as possible")
def serve(port, host, scene, condition, seed, speed):
    """Start the authoring service."""
    import uvicorn

    from .service import create_app

    app = create_app(scene=scene, condition=condition, seed=seed, real_time_factor=speed)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.group()
@click.option("--url", default="http://127.0.0.1:8080", show_default=True, help="Service base URL")
@click.pass_context
def client(ctx, url):
    """Thin HTTP client for a running service."""
    ctx.obj = url


def _client_get(url, path, **kw):
    import httpx

    response = httpx.get(url + path, timeout=30.0, **kw)
    click.echo(json.dumps(response.json(), indent=2))
    return response


def _client_post(url, path, payload=None):
    import httpx

    response = httpx.post(url + path, json=payload, timeout=30.0)
    click.echo(json.dumps(response.json(), indent=2))
    return response


@client.command("world")
@click.pass_obj
def client_world(url):
    _client_get(url, "/world")


@client.command("symbols")
@click.pass_obj
def client_symbols(url):
    _client_get(url, "/symbols")


@client.command("registry")
@click.pass_obj
def client_registry(url):
    _client_get(url, "/registry")


@client.command("detect")
@click.pass_obj
def client_detect(url):
    _client_post(url, "/detect")


@client.command("teach")
@click.option("--name", required=True)
@click.option("--kind", default="WAYPOINT", show_default=True)
@click.option("--pose", required=True, help='JSON pose, e.g. {"translation":[0.4,0,0.2],"rotation":[0,0,0,1]}')
@click.option("--frame", default="WORLD", show_default=True)
@click.pass_obj
def client_teach(url, name, kind, pose, frame):
    _client_post(url, "/teach", {"name": name, "kind": kind, "pose": json.loads(pose), "reference_frame": frame})


@client.command("tree-get")
@click.pass_obj
def client_tree_get(url):
    _client_get(url, "/tree")


@client.command("tree-put")
@click.option("--file", "tree_file", required=True, type=click.Path(exists=True))
@click.pass_obj
def client_tree_put(url, tree_file):
    import httpx

    doc = json.loads(Path(tree_file).read_text())
    if "tree" in doc:
        for row in doc.get("teach", []):
            _client_post(url, "/teach", row)
        doc = doc["tree"]
    response = httpx.put(url + "/tree", json=doc, timeout=30.0)
    click.echo(json.dumps(response.json(), indent=2))


@client.command("tree-run")
@click.option("--condition", type=click.IntRange(1, 4), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_obj
def client_tree_run(url, condition, seed):
    _client_post(url, "/tree/run", {"condition": condition, "seed": seed})


@client.command("tree-stop")
@click.pass_obj
def client_tree_stop(url):
    _client_post(url, "/tree/stop")


@client.command("events")
@click.option("--from-seq", type=int, default=0, show_default=True)
@click.option("--follow", is_flag=True, help="Stream live events instead of dumping the log")
@click.pass_obj
def client_events(url, from_seq, follow):
    import httpx

    if not follow:
        _client_get(url, "/events/log", params={"from_seq": from_seq})
        return
    with httpx.stream("GET", url + "/events", params={"from_seq": from_seq}, timeout=None) as response:
        for line in response.iter_lines():
            if line.startswith("data: "):
                click.echo(line[len("data: ") :])


if __name__ == "__main__":
    main()
