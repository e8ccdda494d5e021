"""Rotation handling, forward kinematics and reconstruction losses.

Motion frames are stored as a root translation (3) plus one 6D rotation per
joint, flattened per frame as [tau_x, tau_y, tau_z, joint0(6), joint1(6), ...].
All loss reductions are means accumulated in f64 so results do not depend on
evaluation order or sequence length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRotationError, ShapeError, ValidationError

_DEGENERATE_EPS = 1e-8


def rot6d_to_matrix(r: np.ndarray) -> np.ndarray:
    """Gram-Schmidt the 6D representation (...,6) into rotation matrices (...,3,3).

    The first three components seed column 1, the last three seed column 2;
    column 3 is their cross product. Near-zero first columns and near-parallel
    seeds raise rather than silently snapping to a fallback frame.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != 6:
        raise ShapeError(f"expected trailing dimension 6, got {r.shape}")
    a = r[..., 0:3]
    b = r[..., 3:6]
    norm_a = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(norm_a < _DEGENERATE_EPS):
        raise DegenerateRotationError("first 6D column has near-zero norm")
    c1 = a / norm_a
    resid = b - np.sum(b * c1, axis=-1, keepdims=True) * c1
    norm_r = np.linalg.norm(resid, axis=-1, keepdims=True)
    if np.any(norm_r < _DEGENERATE_EPS):
        raise DegenerateRotationError("second 6D column is parallel to the first")
    c2 = resid / norm_r
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=-1)


IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])

# 24-joint tree in SMPL-like order: pelvis, hips, spine segments, knees,
# ankles, feet, neck, collars, head, shoulders, elbows, wrists, hands.
_PARENTS = [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21]

_OFFSETS = [
    (0.00, 0.00, 0.00),   # 0  pelvis
    (0.09, -0.09, 0.00),  # 1  left hip
    (-0.09, -0.09, 0.00), # 2  right hip
    (0.00, 0.11, 0.00),   # 3  spine1
    (0.04, -0.38, 0.00),  # 4  left knee
    (-0.04, -0.38, 0.00), # 5  right knee
    (0.00, 0.13, 0.00),   # 6  spine2
    (-0.01, -0.40, -0.02),# 7  left ankle
    (0.01, -0.40, -0.02), # 8  right ankle
    (0.00, 0.06, 0.00),   # 9  spine3
    (0.02, -0.06, 0.12),  # 10 left foot
    (-0.02, -0.06, 0.12), # 11 right foot
    (0.00, 0.21, -0.01),  # 12 neck
    (0.08, 0.12, -0.01),  # 13 left collar
    (-0.08, 0.12, -0.01), # 14 right collar
    (0.00, 0.09, 0.03),   # 15 head
    (0.11, 0.02, -0.01),  # 16 left shoulder
    (-0.11, 0.02, -0.01), # 17 right shoulder
    (0.26, 0.00, -0.01),  # 18 left elbow
    (-0.26, 0.00, -0.01), # 19 right elbow
    (0.25, 0.01, 0.00),   # 20 left wrist
    (-0.25, 0.01, 0.00),  # 21 right wrist
    (0.09, 0.00, 0.00),   # 22 left hand
    (-0.09, 0.00, 0.00),  # 23 right hand
]

# Pelvis, hips, knees, ankles and feet drive locomotion; with the root
# translation they form the 57-wide lower half (9*6+3). The remaining 15
# joints form the 90-wide upper half, 147 total for 24 joints.
LOWER_BODY_JOINTS = (0, 1, 2, 4, 5, 7, 8, 10, 11)
UPPER_BODY_JOINTS = tuple(j for j in range(24) if j not in LOWER_BODY_JOINTS)


@dataclass(frozen=True)
class Skeleton:
    """Joint tree with per-joint rest offsets (meters)."""

    parents: tuple[int, ...]
    offsets: np.ndarray  # (J, 3)

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.float64)
        if offsets.shape != (len(self.parents), 3):
            raise ShapeError(
                f"offsets shape {offsets.shape} does not match {len(self.parents)} joints"
            )
        if self.parents[0] != -1:
            raise ValidationError("joint 0 must be the root (parent -1)")
        for j, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < j:
                raise ValidationError(f"parent of joint {j} must precede it, got {p}")
        object.__setattr__(self, "offsets", offsets)

    @property
    def joint_count(self) -> int:
        return len(self.parents)


def default_skeleton() -> Skeleton:
    return Skeleton(parents=tuple(_PARENTS), offsets=np.array(_OFFSETS))


@dataclass(frozen=True)
class MotionClip:
    """T frames of root translation (T,3) and per-joint 6D rotations (T,J,6)."""

    translation: np.ndarray
    rotations: np.ndarray

    def __post_init__(self):
        trans = np.asarray(self.translation, dtype=np.float64)
        rots = np.asarray(self.rotations, dtype=np.float64)
        if trans.ndim != 2 or trans.shape[1] != 3:
            raise ShapeError(f"translation must be (T,3), got {trans.shape}")
        if rots.ndim != 3 or rots.shape[2] != 6:
            raise ShapeError(f"rotations must be (T,J,6), got {rots.shape}")
        if trans.shape[0] != rots.shape[0]:
            raise ShapeError(
                f"frame counts differ: translation {trans.shape[0]} vs rotations {rots.shape[0]}"
            )
        if trans.shape[0] < 1:
            raise ValidationError("a clip needs at least one frame")
        object.__setattr__(self, "translation", trans)
        object.__setattr__(self, "rotations", rots)

    @property
    def frames(self) -> int:
        return self.translation.shape[0]

    @property
    def joint_count(self) -> int:
        return self.rotations.shape[1]

    def flatten(self) -> np.ndarray:
        """Per-frame layout [tau(3), joint0(6), ..., jointJ-1(6)], shape (T, 3+6J)."""
        T, J = self.frames, self.joint_count
        return np.concatenate([self.translation, self.rotations.reshape(T, 6 * J)], axis=1)

    @staticmethod
    def from_flat(flat: np.ndarray) -> "MotionClip":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.ndim != 2 or (flat.shape[1] - 3) % 6 != 0 or flat.shape[1] < 9:
            raise ShapeError(f"flat motion must be (T, 3+6J), got {flat.shape}")
        J = (flat.shape[1] - 3) // 6
        return MotionClip(
            translation=flat[:, :3],
            rotations=flat[:, 3:].reshape(flat.shape[0], J, 6),
        )


def split_halves(flat: np.ndarray, lower_joints=LOWER_BODY_JOINTS) -> tuple[np.ndarray, np.ndarray]:
    """Split flattened motion (T, 3+6J) into (lower, upper) halves.

    The lower half keeps the root translation plus the listed joints; the
    upper half keeps the remaining joints. Column order within each half
    follows ascending joint index.
    """
    flat = np.asarray(flat)
    J = (flat.shape[1] - 3) // 6
    lower_set = set(lower_joints)
    lower_cols = list(range(3))
    upper_cols = []
    for j in range(J):
        cols = range(3 + 6 * j, 3 + 6 * (j + 1))
        (lower_cols if j in lower_set else upper_cols).extend(cols)
    return flat[:, lower_cols], flat[:, upper_cols]


def merge_halves(lower: np.ndarray, upper: np.ndarray, lower_joints=LOWER_BODY_JOINTS) -> np.ndarray:
    """Inverse of split_halves for the same joint partition."""
    lower = np.asarray(lower)
    upper = np.asarray(upper)
    n_lower = (lower.shape[1] - 3) // 6
    J = n_lower + upper.shape[1] // 6
    out = np.empty((lower.shape[0], 3 + 6 * J), dtype=np.result_type(lower, upper))
    out[:, :3] = lower[:, :3]
    li, ui = 3, 0
    lower_set = set(lower_joints)
    for j in range(J):
        dst = slice(3 + 6 * j, 3 + 6 * (j + 1))
        if j in lower_set:
            out[:, dst] = lower[:, li:li + 6]
            li += 6
        else:
            out[:, dst] = upper[:, ui:ui + 6]
            ui += 6
    return out


def forward_kinematics(clip: MotionClip, skel: Skeleton) -> np.ndarray:
    """Joint world positions (T, J, 3): each joint is its parent's position
    plus the parent's global rotation applied to the joint's rest offset."""
    if clip.joint_count != skel.joint_count:
        raise ShapeError(
            f"clip has {clip.joint_count} joints but skeleton has {skel.joint_count}"
        )
    T, J = clip.frames, clip.joint_count
    local = rot6d_to_matrix(clip.rotations)  # (T, J, 3, 3)
    global_rot = np.empty_like(local)
    positions = np.empty((T, J, 3), dtype=np.float64)
    global_rot[:, 0] = local[:, 0]
    positions[:, 0] = clip.translation
    for j in range(1, J):
        p = skel.parents[j]
        global_rot[:, j] = global_rot[:, p] @ local[:, j]
        positions[:, j] = positions[:, p] + global_rot[:, p] @ skel.offsets[j]
    return positions


def finite_difference(series: np.ndarray) -> np.ndarray:
    """Forward differences along axis 0: out[t] = series[t+1] - series[t]."""
    series = np.asarray(series)
    if series.shape[0] < 2:
        raise ValidationError(f"need at least 2 frames for differences, got {series.shape[0]}")
    return np.diff(series, axis=0)


@dataclass(frozen=True)
class LossWeights:
    velocity: float = 0.5
    acceleration: float = 0.25

    def __post_init__(self):
        if self.velocity < 0 or self.acceleration < 0:
            raise ValidationError("loss weights must be non-negative")


def _check_same_shape(pred: MotionClip, gt: MotionClip) -> None:
    if pred.translation.shape != gt.translation.shape or pred.rotations.shape != gt.rotations.shape:
        raise ShapeError(
            f"clip shapes differ: {pred.translation.shape}/{pred.rotations.shape} vs "
            f"{gt.translation.shape}/{gt.rotations.shape}"
        )


def _mae(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def loss_kin(pred: MotionClip, gt: MotionClip, skel: Skeleton) -> float:
    """Mean absolute error on flattened parameters plus on FK joint positions."""
    _check_same_shape(pred, gt)
    param_term = _mae(pred.flatten(), gt.flatten())
    fk_term = _mae(forward_kinematics(pred, skel), forward_kinematics(gt, skel))
    return param_term + fk_term


def loss_dyn(pred: MotionClip, gt: MotionClip, weights: LossWeights = LossWeights()) -> float:
    """Weighted MAE on first and second forward differences of the parameters."""
    _check_same_shape(pred, gt)
    if pred.frames < 3:
        raise ValidationError(f"need at least 3 frames for dynamics, got {pred.frames}")
    pv = finite_difference(pred.flatten())
    gv = finite_difference(gt.flatten())
    return weights.velocity * _mae(pv, gv) + weights.acceleration * _mae(
        finite_difference(pv), finite_difference(gv)
    )


def loss_rec(
    pred: MotionClip, gt: MotionClip, skel: Skeleton, weights: LossWeights = LossWeights()
) -> float:
    return loss_kin(pred, gt, skel) + loss_dyn(pred, gt, weights)
