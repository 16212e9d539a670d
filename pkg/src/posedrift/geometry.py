"""Quaternion and rigid-motion primitives shared by the whole pipeline.

Conventions, used everywhere without exception:

* Quaternions are stored (w, x, y, z) and composed with the Hamilton
  product.  A pose quaternion maps body-frame vectors into the world
  frame: ``v_world = rotate_vector(q, v_body)``.
* Body angular rates integrate on the right: ``q_next = q * exp(w*dt/2)``.
* All value types are immutable NamedTuples built from plain floats, so
  they are cheap to copy, hashable, and safe to hand between threads.
"""

from __future__ import annotations

import math
from typing import NamedTuple


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


ZERO3 = Vec3(0.0, 0.0, 0.0)


def vec3_of(seq) -> Vec3:
    """Build a Vec3 of plain Python floats (e.g. from a numpy array)."""
    return Vec3(float(seq[0]), float(seq[1]), float(seq[2]))


def vadd(a: Vec3, b: Vec3) -> Vec3:
    return Vec3(a.x + b.x, a.y + b.y, a.z + b.z)


def vsub(a: Vec3, b: Vec3) -> Vec3:
    return Vec3(a.x - b.x, a.y - b.y, a.z - b.z)


def vscale(a: Vec3, s: float) -> Vec3:
    return Vec3(a.x * s, a.y * s, a.z * s)


def vdot(a: Vec3, b: Vec3) -> float:
    return a.x * b.x + a.y * b.y + a.z * b.z


class Quaternion(NamedTuple):
    w: float
    x: float
    y: float
    z: float

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n < 1e-12:
            raise ValueError("cannot normalize a near-zero quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)


IDENTITY = Quaternion(1.0, 0.0, 0.0, 0.0)


def quat_multiply(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product a * b."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return Quaternion(
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_from_axis_angle(axis: Vec3, angle: float) -> Quaternion:
    n = axis.norm()
    if n < 1e-15:
        if abs(angle) > 1e-15:
            raise ValueError("rotation axis has zero length")
        return IDENTITY
    half = 0.5 * angle
    s = math.sin(half) / n
    return Quaternion(math.cos(half), axis.x * s, axis.y * s, axis.z * s)


def quat_from_rotvec(rv: Vec3) -> Quaternion:
    """Exponential map: rotation vector (axis * angle, radians) to quaternion."""
    angle = rv.norm()
    if angle < 1e-12:
        # second-order series keeps unit norm to machine precision near zero
        half = 0.5
        w = 1.0 - 0.125 * angle * angle
        return Quaternion(w, rv.x * half, rv.y * half, rv.z * half).normalized()
    half = 0.5 * angle
    s = math.sin(half) / angle
    return Quaternion(math.cos(half), rv.x * s, rv.y * s, rv.z * s)


def rotate_vector(q: Quaternion, v: Vec3) -> Vec3:
    """Rotate v by q (body -> world for a pose quaternion)."""
    w, x, y, z = q
    # q * (0, v) * q_conj expanded
    tx = 2.0 * (y * v.z - z * v.y)
    ty = 2.0 * (z * v.x - x * v.z)
    tz = 2.0 * (x * v.y - y * v.x)
    return Vec3(
        v.x + w * tx + (y * tz - z * ty),
        v.y + w * ty + (z * tx - x * tz),
        v.z + w * tz + (x * ty - y * tx),
    )


def geodesic_angle(a: Quaternion, b: Quaternion) -> float:
    """Geodesic rotation distance 2*acos(|<a, b>|), in [0, pi].

    Sign-invariant: q and -q encode the same rotation and compare equal.
    Computed as 4*atan2(||a -/+ b||, ||a +/- b||) (sign chosen to align
    hemispheres), which equals the acos form but stays exact near zero:
    identical quaternions give exactly 0.  Raises on non-finite input.
    """
    d = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z
    if not math.isfinite(d):
        raise ValueError("non-finite quaternion input")
    if d < 0.0:
        b = Quaternion(-b.w, -b.x, -b.y, -b.z)
    diff = math.sqrt((a.w - b.w) ** 2 + (a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)
    summ = math.sqrt((a.w + b.w) ** 2 + (a.x + b.x) ** 2 + (a.y + b.y) ** 2 + (a.z + b.z) ** 2)
    theta = 4.0 * math.atan2(diff, summ)
    return min(theta, math.pi)


def quat_integrate(q: Quaternion, omega: Vec3, dt: float) -> Quaternion:
    """Advance q by body rate omega (rad/s) over dt seconds.

    Uses the exact exponential map of omega*dt and renormalizes, so unit
    norm is preserved over arbitrarily long chains of steps.
    """
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    if not (math.isfinite(omega.x) and math.isfinite(omega.y) and math.isfinite(omega.z)):
        raise ValueError("non-finite angular rate")
    dq = quat_from_rotvec(Vec3(omega.x * dt, omega.y * dt, omega.z * dt))
    return quat_multiply(q, dq).normalized()


class SlowPoseState(NamedTuple):
    """Full server-side VIO state for one offload round."""

    timestamp: float
    position: Vec3
    orientation: Quaternion
    velocity: Vec3
    bias_acc: Vec3
    bias_gyro: Vec3
    round_id: int


class FastPose(NamedTuple):
    """High-rate client pose, dead-reckoned inside one window."""

    timestamp: float
    position: Vec3
    orientation: Quaternion
    velocity: Vec3


def pose_delta(a: FastPose, b: FastPose) -> tuple[Vec3, Quaternion]:
    """Relative motion from a to b: (b.p - a.p, a.q^-1 * b.q)."""
    dq = quat_multiply(a.orientation.conjugate(), b.orientation)
    return vsub(b.position, a.position), dq


def apply_delta(a: FastPose, delta: tuple[Vec3, Quaternion]) -> FastPose:
    """Inverse of pose_delta: reattach a relative motion to pose a."""
    dp, dq = delta
    return FastPose(
        timestamp=a.timestamp,
        position=vadd(a.position, dp),
        orientation=quat_multiply(a.orientation, dq).normalized(),
        velocity=a.velocity,
    )
