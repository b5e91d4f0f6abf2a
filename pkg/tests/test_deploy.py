import dataclasses
import io
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locogym.config import default_config
from locogym.deploy import (
    CommandFrame,
    IdentityMechanism,
    InterfaceError,
    NoMovementDetected,
    ObservationAssembler,
    SimulatedRobot,
    SnapshotChecksumError,
    SnapshotDimensionError,
    SnapshotFormatError,
    SnapshotVersionError,
    TwoRodAnkle,
    WorkspaceError,
    export_snapshot,
    load_snapshot,
    measure_latency,
    parallel_from_serial,
    run_policy_loop,
    serial_from_parallel,
    snapshot_from_trainer,
    summarize,
    write_report,
)
from locogym.deploy.snapshot import MAGIC, decode, encode
from locogym.env import BipedEnv, CommandVector
from locogym.ppo import Trainer


def biped_cfg(**kw):
    cfg = default_config()
    cfg = dataclasses.replace(cfg, num_envs=1, randomization=dataclasses.replace(cfg.randomization, enabled=False))
    return dataclasses.replace(cfg, **kw)


@pytest.fixture(scope="module")
def snap():
    trainer = Trainer(biped_cfg())
    rng = np.random.default_rng(5)
    # non-trivial weights so inference actually depends on every input
    for p in trainer.policy.mean_net.params:
        p[...] = rng.normal(0.0, 0.3, p.shape)
    return snapshot_from_trainer(trainer)


# ---------------------------------------------------------------- snapshot

def test_round_trip_bitwise(snap, tmp_path, rng):
    path = tmp_path / "p.lcs"
    digest = export_snapshot(snap, path)
    assert len(digest) == 64
    back = load_snapshot(path)
    obs = rng.normal(size=(100, snap.layout.actor_dim))
    assert np.array_equal(back.act(obs), snap.act(obs))
    for i in range(100):
        assert np.array_equal(back.act(obs[i]), snap.act(obs[i]))
    assert np.array_equal(back.q0, snap.q0) and np.array_equal(back.kp, snap.kp)
    assert back.layout == snap.layout and back.robot == snap.robot
    assert encode(back) == path.read_bytes()


def test_export_refuses_overwrite(snap, tmp_path):
    path = tmp_path / "p.lcs"
    export_snapshot(snap, path)
    with pytest.raises(FileExistsError):
        export_snapshot(snap, path)
    export_snapshot(snap, path, force=True)


def test_version_mismatch(snap):
    data = bytearray(encode(snap))
    struct.pack_into("<I", data, len(MAGIC), 99)
    with pytest.raises(SnapshotVersionError, match="99"):
        decode(bytes(data))


def test_checksum_detects_flipped_byte(snap):
    data = bytearray(encode(snap))
    data[len(data) // 2] ^= 0x01
    with pytest.raises((SnapshotChecksumError, SnapshotFormatError)):
        decode(bytes(data))
    # a flip inside a float payload leaves the framing intact, so only the checksum can catch it
    data = bytearray(encode(snap))
    data[-40] ^= 0x01
    with pytest.raises(SnapshotChecksumError):
        decode(bytes(data))


def test_truncated_and_foreign_files(snap):
    data = encode(snap)
    for n in (0, 10, len(data) // 2, len(data) - 1):
        with pytest.raises(SnapshotFormatError):
            decode(data[:n])
    with pytest.raises(SnapshotFormatError, match="magic"):
        decode(b"NOTASNAP" + data[8:])


def test_dimension_check(snap, tmp_path):
    path = tmp_path / "p.lcs"
    export_snapshot(snap, path)
    load_snapshot(path, num_joints=6)
    with pytest.raises(SnapshotDimensionError):
        load_snapshot(path, num_joints=12)
    with pytest.raises(SnapshotDimensionError):
        snap.check_robot(6, actor_dim=47)


def test_joint_targets_clip(snap):
    a = np.full(6, 1e6)
    assert np.allclose(snap.joint_targets(a), snap.q0 + snap.action_scale * snap.clip_actions)


# ---------------------------------------------------------------- mechanism

def ankle_points(rng, n):
    return rng.uniform(-0.55, 0.55, size=(n, 2))


def test_ankle_jacobian_fd(rng):
    mech = TwoRodAnkle()
    h = 1e-6
    for m in ankle_points(rng, 50):
        J = mech.jacobian(m)
        num = np.column_stack([(mech.forward(m + h * e) - mech.forward(m - h * e)) / (2 * h) for e in np.eye(2)])
        assert np.max(np.abs(J - num)) / np.max(np.abs(J)) < 1e-6


def test_virtual_work_identity(rng):
    mech = TwoRodAnkle(torque_limit=np.full(2, 1e12))
    for m in ankle_points(rng, 50):
        mdot = rng.normal(size=2)
        q_des = mech.forward(m) + rng.normal(0, 0.05, 2)
        cmd = parallel_from_serial(mech, q_des, m, mdot)
        _, qdot_s = serial_from_parallel(mech, m, mdot)
        tau_s = mech.kp * (q_des - mech.forward(m)) - mech.kd * qdot_s
        assert abs(cmd.torque @ mdot - tau_s @ qdot_s) < 1e-10


def test_identity_mechanism_is_plain_pd(rng):
    kp, kd, lim = np.array([50.0, 80.0, 20.0]), np.array([2.0, 3.0, 1.0]), np.array([10.0, 100.0, 5.0])
    mech = IdentityMechanism(3, kp=kp, kd=kd, torque_limit=lim)
    for _ in range(50):
        m, mdot, q_des = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
        tau = parallel_from_serial(mech, q_des, m, mdot).torque
        assert np.array_equal(tau, np.clip(kp * (q_des - m) - kd * mdot, -lim, lim))
    q, qd = serial_from_parallel(mech, [0.1, 0.2, 0.3], [1.0, 2.0, 3.0])
    assert np.array_equal(q, [0.1, 0.2, 0.3]) and np.array_equal(qd, [1.0, 2.0, 3.0])


def test_identity_equilibrium_is_zero():
    mech = IdentityMechanism(2, kp=np.array([40.0, 40.0]), kd=np.array([1.0, 1.0]))
    assert np.array_equal(parallel_from_serial(mech, [0.3, -0.2], [0.3, -0.2], [0.0, 0.0]).torque, [0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(m1=st.floats(-0.5, 0.5), m2=st.floats(-0.5, 0.5))
def test_ankle_inverse_round_trip(m1, m2):
    mech = TwoRodAnkle()
    q = mech.forward([m1, m2])
    assert np.max(np.abs(mech.forward(mech.inverse(q)) - q)) < 1e-8
    assert np.max(np.abs(mech.inverse(q) - [m1, m2])) < 1e-8


def test_ankle_torque_saturates():
    mech = TwoRodAnkle()
    tau = parallel_from_serial(mech, [0.5, 0.5], [-0.5, 0.5], [0.0, 0.0]).torque
    assert np.all(np.abs(tau) <= mech.torque_limit)
    assert np.any(np.abs(tau) == mech.torque_limit)


def test_singular_jacobian_holds_previous():
    mech = TwoRodAnkle()
    cmd = parallel_from_serial(mech, [0.0, 0.0], [0.1, 0.1], [0.0, 0.0], hold=[3.0, -3.0], min_det=1e9)
    assert cmd.held and np.array_equal(cmd.torque, [3.0, -3.0])
    assert not parallel_from_serial(mech, [0.0, 0.0], [0.1, 0.1], [0.0, 0.0]).held


def test_workspace_errors():
    mech = TwoRodAnkle()
    with pytest.raises(WorkspaceError):
        serial_from_parallel(mech, [0.7, 0.0], [0.0, 0.0])
    with pytest.raises(WorkspaceError):
        serial_from_parallel(mech, [0.1], [0.0])
    with pytest.raises(WorkspaceError):
        mech.inverse([1.2, 0.0])


# ---------------------------------------------------------------- runtime

def test_assembler_matches_env_observation(snap):
    env = BipedEnv(biped_cfg())
    cmd = CommandVector(0.3, 0.0, 0.0)
    env.command_script = lambda k, t: cmd
    obs = env.reset_all().actor
    asm = ObservationAssembler(snap, cmd)
    for _ in range(30):
        slot = env.slots[0]
        assert np.array_equal(asm.observe(env._sensors(slot)), obs[0])
        action = snap.act(obs[0])
        obs = env.step(action[None]).actor_obs
        asm.after_action(action, snap.control_dt)


class FlakyRobot:
    """Delegates to a simulated robot and fails its sensor read on one tick."""

    def __init__(self, fail_at):
        self.inner = SimulatedRobot()
        self.fail_at = fail_at
        self.reads = 0

    def read_sensors(self):
        if self.reads == self.fail_at:
            raise InterfaceError("sensor bus timeout")
        self.reads += 1
        return self.inner.read_sensors()

    def send_command(self, frame):
        self.inner.send_command(frame)

    def advance(self, seconds):
        self.inner.advance(seconds)


def test_interface_failure_keeps_completed_ticks(snap):
    report = run_policy_loop(snap, FlakyRobot(7), 20)
    assert not report.ok
    assert report.error.startswith("tick 7") and "sensor bus timeout" in report.error
    assert [t.tick for t in report.ticks] == list(range(7))


def test_late_tick_resends_previous(snap):
    calls = {"n": 0}

    def clock():
        # call 1 seeds the deadline, then each tick reads the clock before and after inference;
        # call 9 is the post-inference read of tick 3, which we make a full second late
        calls["n"] += 1
        return 0.001 * calls["n"] + (1.0 if calls["n"] == 9 else 0.0)

    report = run_policy_loop(snap, SimulatedRobot(), 6, clock=clock)
    assert report.ok
    met = [t.deadline_met for t in report.ticks]
    assert met == [True, True, True, False, True, True]
    assert np.array_equal(report.ticks[3].q_des, report.ticks[2].q_des)


def test_simulated_robot_rejects_wrong_width():
    robot = SimulatedRobot()
    with pytest.raises(InterfaceError):
        robot.send_command(CommandFrame(np.zeros(3), 0.0))


def test_loop_stands_with_zero_policy():
    trainer = Trainer(biped_cfg())
    for p in trainer.policy.mean_net.params:
        p[...] = 0.0
    report = run_policy_loop(snapshot_from_trainer(trainer), SimulatedRobot(), 50)
    assert report.ok and len(report.ticks) == 50
    assert all(np.array_equal(t.q_des, trainer.env.q0) for t in report.ticks)


# ---------------------------------------------------------------- latency

@pytest.mark.parametrize("delay_ms", [0, 5, 10, 20])
def test_latency_is_delay_plus_one_tick(delay_ms):
    trials = measure_latency(SimulatedRobot(delay=delay_ms / 1000, bench=True), 0.1, trials=3)
    for t in trials:
        assert abs(t.latency_ms - (delay_ms + 1)) < 1e-6


def test_latency_no_movement():
    robot = SimulatedRobot(bench=True)
    with pytest.raises(NoMovementDetected):
        measure_latency(robot, 0.0, trials=1)


def test_latency_report(rng):
    trials = measure_latency(SimulatedRobot(delay=0.01, bench=True), trials=4)
    buf = io.StringIO()
    write_report(trials, buf)
    rows = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert [r["trial"] for r in rows] == [0, 1, 2, 3]
    assert set(rows[0]) == {"trial", "publish_time", "first_change_time", "latency_ms"}
    s = summarize(trials)
    assert s["trials"] == 4 and s["min_ms"] <= s["median_ms"] <= s["max_ms"]
