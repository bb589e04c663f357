"""Mutable simulation state, stored as parallel numpy arrays.

``WorldState`` keeps drones and users as struct-of-arrays for speed; the
``drones``/``users`` properties hand out immutable per-entity snapshots when a
record view is more convenient (tests, trajectory dumps).
"""
import copy
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional, Tuple

import numpy as np

from .config import UserClass

RNG_STREAMS = ("init", "mobility", "channel", "exploration")
VIOLATIONS = ("speed", "grid", "altitude", "collision", "battery")


@dataclass(frozen=True)
class UserState:
    id: int
    user_class: UserClass
    position: Tuple[float, float]
    speed: float
    served_by: Optional[int]
    ever_served: bool


@dataclass(frozen=True)
class DroneState:
    id: int
    position: Tuple[float, float, float]
    velocity: Tuple[float, float, float]
    battery: float
    served_users: FrozenSet[int]
    charging: bool


@dataclass(frozen=True)
class ChargingStation:
    position: Tuple[float, float, float]
    occupancy: FrozenSet[int]


def make_rngs(seed: int) -> Dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(RNG_STREAMS))
    return {name: np.random.Generator(np.random.PCG64(s)) for name, s in zip(RNG_STREAMS, children)}


@dataclass
class WorldState:
    t: int
    drone_pos: np.ndarray        # (N, 3)
    drone_vel: np.ndarray        # (N, 3), displacement per unit time of the last step
    battery: np.ndarray          # (N,) percent
    charging: np.ndarray         # (N,) bool
    docked: np.ndarray           # (N,) bool, charging and at the station
    user_pos: np.ndarray         # (M, 2)
    user_class: np.ndarray       # (M,) int, UserClass values
    user_speed: np.ndarray       # (M,) m/s
    served_by: np.ndarray        # (M,) int, -1 when unserved
    ever_served: np.ndarray      # (M,) bool
    station_pos: np.ndarray      # (3,)
    rngs: Dict[str, np.random.Generator]
    violations: Dict[str, int] = field(default_factory=lambda: dict.fromkeys(VIOLATIONS, 0))

    @property
    def n_drones(self) -> int:
        return len(self.drone_pos)

    @property
    def n_users(self) -> int:
        return len(self.user_pos)

    def served_sets(self):
        return [frozenset(np.nonzero(self.served_by == i)[0].tolist()) for i in range(self.n_drones)]

    @property
    def drones(self):
        sets = self.served_sets()
        return [DroneState(i, tuple(self.drone_pos[i]), tuple(self.drone_vel[i]), float(self.battery[i]),
                           sets[i], bool(self.charging[i])) for i in range(self.n_drones)]

    @property
    def users(self):
        return [UserState(m, UserClass(int(self.user_class[m])), tuple(self.user_pos[m]), float(self.user_speed[m]),
                          None if self.served_by[m] < 0 else int(self.served_by[m]), bool(self.ever_served[m]))
                for m in range(self.n_users)]

    @property
    def station(self) -> ChargingStation:
        return ChargingStation(tuple(self.station_pos), frozenset(np.nonzero(self.docked)[0].tolist()))

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    def equals(self, other: "WorldState") -> bool:
        """Bit-level equality of every array, counter and generator state."""
        if self.t != other.t or self.violations != other.violations:
            return False
        for name in ("drone_pos", "drone_vel", "battery", "charging", "docked", "user_pos", "user_class",
                     "user_speed", "served_by", "ever_served", "station_pos"):
            a, b = getattr(self, name), getattr(other, name)
            if a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        return all(self.rngs[k].bit_generator.state == other.rngs[k].bit_generator.state for k in RNG_STREAMS)
