"""Trajectory container, projections and the binary/CSV file formats."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

MAGIC = b"STKJ1"
_HEADER = struct.Struct("<IQdddQ")


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled state sequence of shape ``(N + 1, d)``."""

    states: np.ndarray
    dt: float
    beta: float = 1.0
    gamma: float = 1.0
    seed: int = 0
    generator: str = "numpy.PCG64"
    periodic: bool = False

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.ndim != 2 or states.shape[0] < 1:
            raise ValueError(f"states must have shape (N+1, d), got {states.shape}")
        if not np.all(np.isfinite(states)):
            raise ValueError("trajectory contains non-finite states")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        states = np.ascontiguousarray(states)
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.states.shape[0])

    def coordinate(self, i: int = 0) -> np.ndarray:
        return self.states[:, i]

    def increments(self, i: int = 0) -> np.ndarray:
        """Raw differences of coordinate ``i``; wrapped into (-pi, pi] for angles."""
        diff = np.diff(self.states[:, i])
        if self.periodic:
            diff = wrap_angle(diff)
        return diff


def wrap_angle(x):
    """Map angles into (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(y == -np.pi, np.pi, y)


def project(traj: Trajectory, projection: str = "identity") -> Trajectory:
    """Apply a projection map to every state.

    ``identity`` returns the trajectory unchanged; ``polar_angle`` maps a
    two-dimensional trajectory onto ``atan2(y, x)`` in [-pi, pi] and marks it
    periodic so that increments are taken as wrapped differences.
    """
    name = projection.replace("-", "_")
    if name == "identity":
        return traj
    if name != "polar_angle":
        raise ValueError(f"unknown projection {projection!r}")
    if traj.d != 2:
        raise ValueError(f"polar_angle needs a 2D trajectory, got d={traj.d}")
    x, y = traj.states[:, 0], traj.states[:, 1]
    at_origin = (x == 0.0) & (y == 0.0)
    if at_origin.any():
        raise ValueError(f"polar angle undefined at the origin (state {int(np.argmax(at_origin))})")
    return replace(traj, states=np.arctan2(y, x)[:, None], periodic=True)


def save_trajectory(traj: Trajectory, path) -> None:
    """Write the little-endian binary trajectory format."""
    tag = traj.generator.encode("utf-8")
    if traj.periodic:
        tag += b";periodic"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(traj.d, traj.n_steps, traj.dt, traj.beta, traj.gamma,
                              int(traj.seed) & 0xFFFFFFFFFFFFFFFF))
        fh.write(struct.pack("<I", len(tag)))
        fh.write(tag)
        fh.write(traj.states.astype("<f8").tobytes(order="C"))


def load_trajectory(path) -> Trajectory:
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise ValueError(f"{path}: not a trajectory file (bad magic)")
    off = 5
    d, n, dt, beta, gamma, seed = _HEADER.unpack_from(data, off)
    off += _HEADER.size
    (taglen,) = struct.unpack_from("<I", data, off)
    off += 4
    tag = data[off:off + taglen].decode("utf-8")
    off += taglen
    expected = (n + 1) * d * 8
    if len(data) - off != expected:
        raise ValueError(f"{path}: expected {expected} bytes of states, found {len(data) - off}")
    states = np.frombuffer(data, dtype="<f8", offset=off).reshape(n + 1, d)
    periodic = tag.endswith(";periodic")
    if periodic:
        tag = tag[: -len(";periodic")]
    return Trajectory(states.astype(float), dt, beta, gamma, seed, tag, periodic)


def export_csv(traj: Trajectory, path) -> None:
    header = ",".join(["t"] + [f"x{i + 1}" for i in range(traj.d)])
    table = np.column_stack([traj.times, traj.states])
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")
