"""Skeletons, motion sequences, forward kinematics and data preparation.

A motion sequence stores local joint rotations as T x N x 3 x 3 float32
matrices plus a skeleton (kinematic forest with bone offsets in millimeters
and left/right mirror pairing). Also provides synthetic sinusoidal motion
generation, sequence windowing, next-frame target shifting and the
reverse / mirror augmentations.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import so3

JOINT_DIM = 9  # flattened 3x3 rotation per joint

# sagittal reflection used by the mirror augmentation
_SAGITTAL = np.diag([-1.0, 1.0, 1.0])


@dataclass
class Skeleton:
    """Kinematic forest: parent indices, bone offsets (mm), mirror pairing."""

    joint_names: list[str]
    parent: np.ndarray      # (N,) int, -1 for roots, parent[i] < i
    offset: np.ndarray      # (N, 3) float, bone offset in the parent frame
    mirror_pair: np.ndarray  # (N,) int, left/right partner or self

    def __post_init__(self):
        self.parent = np.asarray(self.parent, dtype=np.int64)
        self.offset = np.asarray(self.offset, dtype=np.float64)
        self.mirror_pair = np.asarray(self.mirror_pair, dtype=np.int64)
        n = len(self.joint_names)
        if self.parent.shape != (n,) or self.offset.shape != (n, 3) or self.mirror_pair.shape != (n,):
            raise ValueError("skeleton field shapes are inconsistent")
        for i, p in enumerate(self.parent):
            if p >= i:
                raise ValueError("parents must be topologically ordered (parent[i] < i)")
        if not np.array_equal(self.mirror_pair[self.mirror_pair], np.arange(n)):
            raise ValueError("mirror_pair must be an involution")

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Skeleton)
            and self.joint_names == other.joint_names
            and np.array_equal(self.parent, other.parent)
            and np.allclose(self.offset, other.offset)
            and np.array_equal(self.mirror_pair, other.mirror_pair)
        )


def default_skeleton() -> Skeleton:
    """9-joint desk-scale skeleton with nontrivial left/right mirror pairs.

    Mirror partners have x-negated offsets so mirroring commutes with forward
    kinematics up to an x flip.
    """
    names = ["root", "spine", "head", "l_collar", "l_arm", "r_collar", "r_arm",
             "l_leg", "r_leg"]
    parent = [-1, 0, 1, 1, 3, 1, 5, 0, 0]
    offset = [
        [0.0, 0.0, 0.0],
        [0.0, 200.0, 0.0],
        [0.0, 150.0, 0.0],
        [90.0, 120.0, 0.0],
        [170.0, -40.0, 0.0],
        [-90.0, 120.0, 0.0],
        [-170.0, -40.0, 0.0],
        [100.0, -450.0, 0.0],
        [-100.0, -450.0, 0.0],
    ]
    mirror = [0, 1, 2, 5, 6, 3, 4, 8, 7]
    return Skeleton(names, np.array(parent), np.array(offset), np.array(mirror))


@dataclass
class MotionSequence:
    """Local joint rotations over time plus the skeleton they animate."""

    skeleton: Skeleton
    rotations: np.ndarray  # (T, N, 3, 3) float32
    frame_rate: float

    def __post_init__(self):
        self.rotations = np.asarray(self.rotations, dtype=np.float32)
        if self.rotations.ndim != 4 or self.rotations.shape[1] != self.skeleton.n_joints \
                or self.rotations.shape[2:] != (3, 3):
            raise ValueError(f"bad rotations shape {self.rotations.shape}")
        if self.rotations.shape[0] < 1:
            raise ValueError("sequence must contain at least one frame")

    @property
    def n_frames(self) -> int:
        return self.rotations.shape[0]

    def flat(self) -> np.ndarray:
        """(T, N, 9) view of the rotations."""
        t, n = self.rotations.shape[:2]
        return self.rotations.reshape(t, n, JOINT_DIM)


@dataclass
class WindowedBatch:
    """Model inputs and next-frame targets, flattened to B x T x N x 9."""

    inputs: np.ndarray
    targets: np.ndarray


def forward_kinematics(seq: MotionSequence) -> np.ndarray:
    """Global joint positions (T, N, 3) in millimeters, root at the origin."""
    return fk_positions(seq.rotations, seq.skeleton)


def fk_positions(rotations: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Forward kinematics on stacked rotations (..., N, 3, 3) -> (..., N, 3)."""
    R = np.asarray(rotations, dtype=np.float64)
    n = skeleton.n_joints
    lead = R.shape[:-3]
    glob = np.empty(lead + (n, 3, 3))
    pos = np.zeros(lead + (n, 3))
    for j in range(n):
        p = skeleton.parent[j]
        if p < 0:
            glob[..., j, :, :] = R[..., j, :, :]
            pos[..., j, :] = 0.0
        else:
            glob[..., j, :, :] = glob[..., p, :, :] @ R[..., j, :, :]
            pos[..., j, :] = pos[..., p, :] + np.einsum(
                "...ij,j->...i", glob[..., p, :, :], skeleton.offset[j])
    return pos


@dataclass
class JointMotionSpec:
    """Sinusoidal rotation of one joint about a fixed axis."""

    joint: int
    axis: np.ndarray        # unit 3-vector
    amplitude: float        # radians, < pi
    frequency: float        # Hz, < frame_rate / 2
    phase: float = 0.0

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=np.float64)
        norm = np.linalg.norm(self.axis)
        if norm == 0:
            raise ValueError("axis must be nonzero")
        self.axis = self.axis / norm


def synth_motion(
    skeleton: Skeleton,
    duration_frames: int,
    frame_rate: float,
    spec: list[JointMotionSpec],
    noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
) -> MotionSequence:
    """Deterministic synthetic motion: per-joint sinusoidal rotation angles
    with optional Gaussian angle noise, projected back onto SO(3)."""
    if duration_frames < 1:
        raise ValueError("duration_frames must be >= 1")
    for js in spec:
        if abs(js.amplitude) >= np.pi:
            raise ValueError(f"amplitude must be < pi, got {js.amplitude}")
        if js.frequency >= frame_rate / 2.0:
            raise ValueError(
                f"frequency {js.frequency} Hz aliases at {frame_rate} fps")
    if noise_std > 0 and rng is None:
        raise ValueError("noise_std > 0 requires an rng")

    t = np.arange(duration_frames, dtype=np.float64)
    rots = np.broadcast_to(
        np.eye(3), (duration_frames, skeleton.n_joints, 3, 3)).copy()
    for js in spec:
        angle = js.amplitude * np.sin(
            2.0 * np.pi * js.frequency * t / frame_rate + js.phase)
        if noise_std > 0:
            angle = angle + rng.normal(0.0, noise_std, size=angle.shape)
        rots[:, js.joint] = so3.rotmat_from_angleaxis(angle[:, None] * js.axis)
    rots = so3.project_to_so3(rots.reshape(-1, 3, 3)).reshape(rots.shape)
    return MotionSequence(skeleton, rots.astype(np.float32), frame_rate)


def two_frequency_spec(skeleton: Skeleton) -> list[JointMotionSpec]:
    """Desk-scale periodic motion: all joints driven by two base frequencies
    (0.5 and 1.0 Hz) with distinct axes, amplitudes and phases."""
    axes = [np.array([0, 0, 1.0]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0])]
    out = []
    for j in range(skeleton.n_joints):
        freq = 0.5 if j % 2 == 0 else 1.0
        out.append(JointMotionSpec(
            joint=j,
            axis=axes[j % 3],
            amplitude=0.2 + 0.05 * (j % 4),
            frequency=freq,
            phase=0.7 * j,
        ))
    return out


def window(seq: MotionSequence, length: int, stride: int) -> list[MotionSequence]:
    """Overlapping windows; empty list when length exceeds the sequence."""
    if length < 1 or stride < 1:
        raise ValueError("length and stride must be positive")
    t = seq.n_frames
    if length > t:
        return []
    starts = range(0, t - length + 1, stride)
    return [MotionSequence(seq.skeleton, seq.rotations[s:s + length], seq.frame_rate)
            for s in starts]


def augment_reverse(seq: MotionSequence) -> MotionSequence:
    """Reverse the temporal order of frames."""
    return MotionSequence(seq.skeleton, seq.rotations[::-1].copy(), seq.frame_rate)


def mirror_rotations(rotations: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Swap mirror-partner joints and conjugate by the sagittal reflection:
    R' = S R S with S = diag(-1, 1, 1)."""
    R = np.asarray(rotations)
    swapped = R[..., skeleton.mirror_pair, :, :]
    return (_SAGITTAL @ swapped @ _SAGITTAL).astype(R.dtype)


def augment_mirror(seq: MotionSequence) -> MotionSequence:
    return MotionSequence(
        seq.skeleton, mirror_rotations(seq.rotations, seq.skeleton), seq.frame_rate)


def shift_targets(windows: list[MotionSequence]) -> WindowedBatch:
    """Inputs = frames [0, T-2], targets = frames [1, T-1], flattened."""
    if not windows:
        raise ValueError("need at least one window")
    t = windows[0].n_frames
    if t < 2:
        raise ValueError("windows must have length >= 2 for target shifting")
    if any(w.n_frames != t for w in windows):
        raise ValueError("all windows must have equal length")
    flat = np.stack([w.flat() for w in windows])
    return WindowedBatch(inputs=flat[:, :-1].copy(), targets=flat[:, 1:].copy())


# ---------------------------------------------------------------------------
# "STM1" motion file format and CSV export
# ---------------------------------------------------------------------------

_MAGIC = b"STM1"


def save_motion(path, seq: MotionSequence):
    """magic, frame_rate (f32), T, N (u32 LE), skeleton block, rotations."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<fII", seq.frame_rate, seq.n_frames, seq.skeleton.n_joints))
        for name in seq.skeleton.joint_names:
            enc = name.encode("utf-8")
            fh.write(struct.pack("<I", len(enc)))
            fh.write(enc)
        sk = seq.skeleton
        fh.write(np.asarray(sk.parent, dtype="<i4").tobytes())
        fh.write(np.asarray(sk.offset, dtype="<f4").tobytes())
        fh.write(np.asarray(sk.mirror_pair, dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(seq.rotations, dtype="<f4").tobytes())


def load_motion(path) -> MotionSequence:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not an STM1 motion file")
        frame_rate, t, n = struct.unpack("<fII", fh.read(12))
        names = []
        for _ in range(n):
            (ln,) = struct.unpack("<I", fh.read(4))
            names.append(fh.read(ln).decode("utf-8"))
        parent = np.frombuffer(fh.read(4 * n), dtype="<i4").astype(np.int64)
        offset = np.frombuffer(fh.read(12 * n), dtype="<f4").reshape(n, 3).astype(np.float64)
        mirror = np.frombuffer(fh.read(4 * n), dtype="<i4").astype(np.int64)
        rots = np.frombuffer(fh.read(4 * t * n * 9), dtype="<f4").reshape(t, n, 3, 3)
        skeleton = Skeleton(names, parent, offset, mirror)
        return MotionSequence(skeleton, rots.copy(), frame_rate)


def export_positions_csv(path, seq: MotionSequence):
    """Forward-kinematics positions as `frame,joint,x,y,z` rows."""
    pos = forward_kinematics(seq)
    with open(path, "w") as fh:
        fh.write("frame,joint,x,y,z\n")
        for t in range(pos.shape[0]):
            for j in range(pos.shape[1]):
                x, y, z = pos[t, j]
                fh.write(f"{t},{seq.skeleton.joint_names[j]},{x:.6f},{y:.6f},{z:.6f}\n")


def skeleton_from_json(path) -> Skeleton:
    with open(path) as fh:
        d = json.load(fh)
    return Skeleton(
        joint_names=list(d["joint_names"]),
        parent=np.asarray(d["parent"]),
        offset=np.asarray(d["offset"], dtype=np.float64),
        mirror_pair=np.asarray(d["mirror_pair"]),
    )


def motion_spec_from_json(path, skeleton: Skeleton) -> tuple[list[JointMotionSpec], float]:
    """Load a per-joint sinusoid spec file; returns (specs, noise_std).

    Joints may be referenced by index or by name."""
    with open(path) as fh:
        d = json.load(fh)
    specs = []
    for item in d["joints"]:
        joint = item["joint"]
        if isinstance(joint, str):
            joint = skeleton.joint_names.index(joint)
        specs.append(JointMotionSpec(
            joint=joint,
            axis=np.asarray(item["axis"], dtype=np.float64),
            amplitude=float(item["amplitude"]),
            frequency=float(item["frequency"]),
            phase=float(item.get("phase", 0.0)),
        ))
    return specs, float(d.get("noise_std", 0.0))
