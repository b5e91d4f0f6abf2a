"""Self-describing binary policy snapshot.

Layout (all integers little-endian)::

    magic        8 bytes   b"LOCOSNAP"
    version      u32
    n_sections   u32
    n_sections x section:
        name_len u16, name (utf-8)
        kind     u8        0 = JSON text, 1 = float64 array
        ndim     u8
        shape    ndim x u32
        nbytes   u64
        payload  nbytes bytes (JSON text, or C-order little-endian float64)
    sha256       32 bytes over everything above

See docs/snapshot_format.md for the section list.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..env.observations import ObservationLayout
from ..nn import MLP, GaussianPolicy

MAGIC = b"LOCOSNAP"
VERSION = 1
DIGEST_SIZE = 32
KIND_JSON = 0
KIND_F64 = 1


class SnapshotError(ValueError):
    pass


class SnapshotVersionError(SnapshotError):
    pass


class SnapshotChecksumError(SnapshotError):
    pass


class SnapshotFormatError(SnapshotError):
    pass


class SnapshotDimensionError(SnapshotError):
    pass


@dataclass
class PolicySnapshot:
    """Everything the runtime needs to turn sensor frames into joint targets."""

    policy: GaussianPolicy
    layout: ObservationLayout
    q0: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    action_scale: float
    clip_actions: float
    control_dt: float
    gait_frequency: float
    robot: str = "robot"
    task: str = "biped"

    @property
    def num_joints(self) -> int:
        return int(self.q0.shape[0])

    def act(self, actor_obs) -> np.ndarray:
        """Deterministic (mean) action for one observation or a batch."""
        obs = np.asarray(actor_obs, dtype=np.float64)
        out = self.policy.mean_net.forward(np.atleast_2d(obs))
        return out[0] if obs.ndim == 1 else out

    def joint_targets(self, action) -> np.ndarray:
        a = np.clip(action, -self.clip_actions, self.clip_actions)
        return self.q0 + self.action_scale * a

    def check_robot(self, num_joints: int, actor_dim: int | None = None) -> None:
        if num_joints != self.num_joints:
            raise SnapshotDimensionError(f"snapshot drives {self.num_joints} joints, robot has {num_joints}")
        if actor_dim is not None and actor_dim != self.layout.actor_dim:
            raise SnapshotDimensionError(f"snapshot expects {self.layout.actor_dim} observations, got {actor_dim}")


# ---------------------------------------------------------------- encoding

def _section(name: str, kind: int, payload: bytes, shape=()) -> bytes:
    raw = name.encode("utf-8")
    head = struct.pack("<H", len(raw)) + raw + struct.pack("<BB", kind, len(shape))
    head += b"".join(struct.pack("<I", int(s)) for s in shape)
    return head + struct.pack("<Q", len(payload)) + payload


def _array(name: str, arr) -> bytes:
    a = np.ascontiguousarray(arr, dtype="<f8")
    return _section(name, KIND_F64, a.tobytes(order="C"), a.shape)


def encode(snap: PolicySnapshot, version: int = VERSION) -> bytes:
    net = snap.policy.mean_net
    meta = {
        "robot": snap.robot,
        "task": snap.task,
        "sizes": list(net.sizes),
        "activation": net.activation,
        "action_scale": snap.action_scale,
        "clip_actions": snap.clip_actions,
        "control_dt": snap.control_dt,
        "gait_frequency": snap.gait_frequency,
        "layout": snap.layout.to_dict(),
    }
    sections = [_section("meta", KIND_JSON, json.dumps(meta, sort_keys=True).encode("utf-8"))]
    sections += [_array(f"param{i}", p) for i, p in enumerate(net.params)]
    sections += [_array("log_std", snap.policy.log_std), _array("q0", snap.q0), _array("kp", snap.kp),
                 _array("kd", snap.kd)]
    body = MAGIC + struct.pack("<II", version, len(sections)) + b"".join(sections)
    return body + hashlib.sha256(body).digest()


def export_snapshot(snap: PolicySnapshot, path: str | Path, *, force: bool = False) -> str:
    """Write the snapshot; return its SHA-256 hex digest."""
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force to overwrite")
    data = encode(snap)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return data[-DIGEST_SIZE:].hex()


# ---------------------------------------------------------------- decoding

class _Reader:
    def __init__(self, data: bytes, end: int):
        self.data, self.pos, self.end = data, 0, end

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise SnapshotFormatError(f"truncated snapshot: needed {n} bytes at offset {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(data: bytes) -> PolicySnapshot:
    if len(data) < len(MAGIC) + 8:
        raise SnapshotFormatError(f"truncated snapshot: {len(data)} bytes")
    if data[:len(MAGIC)] != MAGIC:
        raise SnapshotFormatError("not a policy snapshot (bad magic)")
    (version,) = struct.unpack_from("<I", data, len(MAGIC))
    if version != VERSION:
        raise SnapshotVersionError(f"unsupported snapshot version {version} (this build reads {VERSION})")
    if len(data) < len(MAGIC) + 8 + DIGEST_SIZE:
        raise SnapshotFormatError("truncated snapshot: missing checksum")
    r = _Reader(data, len(data) - DIGEST_SIZE)
    r.take(len(MAGIC) + 4)
    (count,) = r.unpack("<I")
    sections = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8", errors="replace")
        kind, ndim = r.unpack("<BB")
        shape = tuple(r.unpack(f"<{ndim}I")) if ndim else ()
        (nbytes,) = r.unpack("<Q")
        payload = r.take(nbytes)
        sections[name] = (kind, shape, payload)
    if r.pos != r.end:
        raise SnapshotFormatError(f"{r.end - r.pos} unexpected bytes before the checksum")
    if hashlib.sha256(data[:r.end]).digest() != data[r.end:]:
        raise SnapshotChecksumError("snapshot checksum mismatch (file corrupted)")
    return _build(sections)


def _get_array(sections, name) -> np.ndarray:
    if name not in sections:
        raise SnapshotFormatError(f"missing section '{name}'")
    kind, shape, payload = sections[name]
    if kind != KIND_F64 or len(payload) != 8 * int(np.prod(shape, dtype=np.int64)):
        raise SnapshotFormatError(f"section '{name}' is not a float64 array of shape {shape}")
    return np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)


def _build(sections) -> PolicySnapshot:
    if "meta" not in sections or sections["meta"][0] != KIND_JSON:
        raise SnapshotFormatError("missing meta section")
    try:
        meta = json.loads(sections["meta"][2].decode("utf-8"))
        sizes = tuple(int(s) for s in meta["sizes"])
        layout = ObservationLayout.from_dict(meta["layout"])
    except (ValueError, KeyError, TypeError) as exc:
        raise SnapshotFormatError(f"bad meta section: {exc}") from None
    params = [_get_array(sections, f"param{i}") for i in range(2 * (len(sizes) - 1))]
    try:
        net = MLP(sizes, meta["activation"], params)
        policy = GaussianPolicy(net, _get_array(sections, "log_std"))
    except ValueError as exc:
        raise SnapshotDimensionError(str(exc)) from None
    if layout.actor_dim != net.in_dim:
        raise SnapshotDimensionError(f"layout describes {layout.actor_dim} inputs, network takes {net.in_dim}")
    q0, kp, kd = (_get_array(sections, k) for k in ("q0", "kp", "kd"))
    if not (q0.shape == kp.shape == kd.shape == (net.out_dim,)):
        raise SnapshotDimensionError(f"q0/kp/kd must have {net.out_dim} entries")
    return PolicySnapshot(policy, layout, q0, kp, kd, float(meta["action_scale"]), float(meta["clip_actions"]),
                          float(meta["control_dt"]), float(meta["gait_frequency"]), str(meta.get("robot", "robot")),
                          str(meta.get("task", "biped")))


def load_snapshot(path: str | Path, *, num_joints: int | None = None) -> PolicySnapshot:
    """Read and verify a snapshot; optionally check it against a robot's joint count."""
    snap = decode(Path(path).read_bytes())
    if num_joints is not None:
        snap.check_robot(num_joints)
    return snap


def snapshot_from_trainer(trainer) -> PolicySnapshot:
    """Package a trainer's current policy with its env's deployment constants."""
    env, cfg = trainer.env, trainer.cfg
    if cfg.task == "biped":
        q0, kp, kd = env.q0, env.actuator.kp, env.actuator.kd
        robot = env.model.name
    else:
        q0 = kp = kd = np.zeros(env.num_actions)
        robot = "pointmass"
    return PolicySnapshot(
        policy=GaussianPolicy(MLP(trainer.policy.mean_net.sizes, trainer.policy.mean_net.activation,
                                  [p.copy() for p in trainer.policy.mean_net.params]),
                              trainer.policy.log_std.copy()),
        layout=env.layout, q0=np.array(q0, dtype=np.float64), kp=np.array(kp, dtype=np.float64),
        kd=np.array(kd, dtype=np.float64), action_scale=cfg.robot.action_scale,
        clip_actions=cfg.robot.clip_actions, control_dt=cfg.control_dt,
        gait_frequency=cfg.rewards.gait_frequency, robot=robot, task=cfg.task,
    )
