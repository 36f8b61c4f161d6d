import math

import numpy as np
import pytest

from workcell.geometry import Pose, rotation_distance, translation_distance
from workcell.kinematics import (
    DHJoint,
    DimensionError,
    KinematicChain,
    fk_points,
    fk_points_batch,
    forward_kinematics,
    inverse_kinematics,
    jacobian,
)


def make_planar_chain(links=(1.0, 1.0)):
    joints = tuple(
        DHJoint(a=length, alpha=0.0, d=0.0, theta_offset=0.0, lower=-math.pi, upper=math.pi)
        for length in links
    )
    return KinematicChain(
        joints=joints,
        ee_offset=Pose.identity(),
        link_radii=tuple([0.05] * (len(links) + 1)),
        home=tuple([0.0] * len(links)),
        table_skip_segments=0,
    )


def test_single_revolute_zero_angle():
    chain = make_planar_chain(links=(0.5,))
    pose = forward_kinematics(chain, [0.0])
    assert np.allclose(pose.translation, [0.5, 0.0, 0.0], atol=1e-12)


def test_two_link_planar_quarter_turn():
    chain = make_planar_chain(links=(1.0, 1.0))
    pose = forward_kinematics(chain, [math.pi / 2, 0.0])
    assert np.allclose(pose.translation, [0.0, 2.0, 0.0], atol=1e-12)


def _oracle_fk(chain: KinematicChain, q):
    """Independent FK: explicit Rz * Tz * Tx * Rx factor product."""

    def rz(th):
        c, s = math.cos(th), math.sin(th)
        return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])

    def rx(al):
        c, s = math.cos(al), math.sin(al)
        return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1]])

    def trans(x, y, z):
        m = np.eye(4)
        m[:3, 3] = [x, y, z]
        return m

    t = np.eye(4)
    for joint, angle in zip(chain.joints, q):
        t = t @ rz(angle + joint.theta_offset) @ trans(0, 0, joint.d) @ trans(joint.a, 0, 0) @ rx(joint.alpha)
    return t @ chain.ee_offset.to_matrix()


def test_fk_matches_naive_matrix_product(chain):
    rng = np.random.default_rng(21)
    for _ in range(50):
        q = rng.uniform(chain.lower_limits, chain.upper_limits)
        expected = _oracle_fk(chain, q)
        pose = forward_kinematics(chain, q)
        assert np.allclose(pose.translation, expected[:3, 3], atol=1e-9)
        assert rotation_distance(pose, Pose.from_matrix(expected)) < 1e-9


def test_fk_batch_matches_single(chain):
    rng = np.random.default_rng(22)
    qs = rng.uniform(chain.lower_limits, chain.upper_limits, size=(20, chain.dof))
    batch = fk_points_batch(chain, qs)
    for i, q in enumerate(qs):
        assert np.allclose(batch[i], fk_points(chain, q), atol=1e-9)


def test_fk_dimension_mismatch(chain):
    with pytest.raises(DimensionError):
        forward_kinematics(chain, [0.0, 0.0])


def test_jacobian_matches_finite_differences(chain):
    rng = np.random.default_rng(23)
    q = rng.uniform(-1.0, 1.0, size=chain.dof)
    jac = jacobian(chain, q)
    eps = 1e-7
    base = forward_kinematics(chain, q)
    for i in range(chain.dof):
        dq = np.zeros(chain.dof)
        dq[i] = eps
        bumped = forward_kinematics(chain, q + dq)
        dp = (bumped.translation - base.translation) / eps
        assert np.allclose(jac[:3, i], dp, atol=1e-5)


def test_ik_fixed_point(chain):
    seed = chain.home_q
    target = forward_kinematics(chain, seed)
    sol = inverse_kinematics(chain, target, seed)
    assert sol is not None
    reached = forward_kinematics(chain, sol)
    assert translation_distance(reached, target) < 1e-3
    assert rotation_distance(reached, target) < 1e-2


def test_ik_unreachable_returns_none(chain):
    target = Pose.from_translation(3.0, 0.0, 0.0)
    assert inverse_kinematics(chain, target, chain.home_q) is None


def test_ik_random_reachable_targets(chain):
    rng = np.random.default_rng(24)
    solved = 0
    trials = 100
    for _ in range(trials):
        q_true = rng.uniform(0.9 * chain.lower_limits, 0.9 * chain.upper_limits)
        target = forward_kinematics(chain, q_true)
        sol = inverse_kinematics(chain, target, chain.home_q)
        if sol is None:
            continue
        assert chain.within_limits(sol)
        reached = forward_kinematics(chain, sol)
        assert translation_distance(reached, target) < 1e-3
        assert rotation_distance(reached, target) < 1e-2
        solved += 1
    assert solved >= 95


def test_ik_deterministic(chain):
    rng = np.random.default_rng(25)
    q_true = rng.uniform(-1.5, 1.5, size=chain.dof)
    target = forward_kinematics(chain, q_true)
    a = inverse_kinematics(chain, target, chain.home_q)
    b = inverse_kinematics(chain, target, chain.home_q)
    assert a is not None and b is not None
    assert np.array_equal(a, b)


def test_chain_limit_validation():
    with pytest.raises(ValueError):
        DHJoint(a=0.0, alpha=0.0, d=0.0, theta_offset=0.0, lower=1.0, upper=-1.0)
