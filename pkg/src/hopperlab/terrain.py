"""Ground-truth granular reaction law for a flat foot intruding a bead bed.

The vertical reaction combines a depth-proportional resistance with the
momentum flux of grains entrained under the foot:

    F(z, zd, zdd) = k_stiff * z + dm_a/dz * zd^2 + m_a(z) * zdd

with the entrained (added) mass saturating exponentially,
m_a(z) = m_a_inf * (1 - exp(-z / z_c)).  Penetration depth z is positive
downward.  The momentum-flux terms act only while the foot penetrates
(zd >= 0): grains are abandoned on withdrawal, and the bed can never pull
the foot down, so the total is clamped at zero from below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import GRAVITY


@dataclass(frozen=True)
class TerrainParams:
    """Granular bed parameters (SI units)."""

    k_stiff: float = 800.0      # depth stiffness [N/m]
    m_a_inf: float = 0.15       # saturated added mass [kg]
    z_c: float = 0.015          # added-mass saturation depth [m]
    d_grain: float = 300e-6     # grain diameter [m]
    surface_height: float = 0.0  # undisturbed surface datum [m]

    def __post_init__(self):
        if self.k_stiff <= 0.0:
            raise ValueError("k_stiff must be positive")
        if self.m_a_inf < 0.0:
            raise ValueError("m_a_inf must be nonnegative")
        if self.z_c <= 0.0:
            raise ValueError("z_c must be positive")
        if not (0.0 < self.d_grain < 0.01):
            raise ValueError("d_grain must lie in (0, 0.01) m")


@dataclass(frozen=True)
class ForceDecomposition:
    """One evaluation of the reaction law, split by mechanism [N]."""

    f_static: float
    f_drag: float
    f_added: float
    f_total: float


_ZERO_FORCE = ForceDecomposition(0.0, 0.0, 0.0, 0.0)


def penetration_depth(x_f: float, params: TerrainParams) -> float:
    """Depth of the foot below the undisturbed surface, clamped at zero."""
    return max(0.0, params.surface_height - x_f)


def added_mass_profile(z: float, params: TerrainParams) -> tuple[float, float]:
    """Entrained grain mass m_a(z) [kg] and its depth gradient [kg/m] for z >= 0."""
    decay = math.exp(-z / params.z_c)
    return params.m_a_inf * (1.0 - decay), params.m_a_inf / params.z_c * decay


def terrain_force(z: float, z_dot: float, z_ddot: float, params: TerrainParams) -> ForceDecomposition:
    """Evaluate the reaction law at penetration depth z >= 0.

    z_dot and z_ddot are the penetration rate and acceleration (positive
    downward).  Out of contact (z = 0) everything is zero; while
    withdrawing (z_dot < 0) only the depth term remains.
    """
    if z <= 0.0:
        return _ZERO_FORCE
    f_static = params.k_stiff * z
    if z_dot >= 0.0:
        m_a, dm_a = added_mass_profile(z, params)
        f_drag = dm_a * z_dot * z_dot
        f_added = m_a * z_ddot
    else:
        f_drag = 0.0
        f_added = 0.0
    return ForceDecomposition(
        f_static=f_static,
        f_drag=f_drag,
        f_added=f_added,
        f_total=max(0.0, f_static + f_drag + f_added),
    )


def inertial_threshold(d_grain: float) -> float:
    """Intrusion speed sqrt(2*d_grain*g) above which grain inertia matters [m/s]."""
    if d_grain <= 0.0:
        raise ValueError("d_grain must be positive")
    return math.sqrt(2.0 * d_grain * GRAVITY)


def force_map(params: TerrainParams, depth_grid, speed_grid) -> np.ndarray:
    """Constant-speed force surface, shape (len(depth_grid), len(speed_grid)).

    Under constant-speed intrusion zdd = 0, so entry (i, j) is the total
    reaction at depth z_i and penetration rate v_j.
    """
    depths = np.asarray(depth_grid, dtype=float)
    speeds = np.asarray(speed_grid, dtype=float)
    if depths.size == 0 or speeds.size == 0:
        raise ValueError("depth and speed grids must be nonempty")
    if np.any(np.diff(depths) < 0.0) or np.any(np.diff(speeds) < 0.0):
        raise ValueError("grids must be sorted ascending")
    if depths[0] < 0.0 or speeds[0] < 0.0:
        raise ValueError("depths and speeds must be nonnegative")
    z = depths[:, None]
    v = speeds[None, :]
    grad = params.m_a_inf / params.z_c * np.exp(-z / params.z_c)
    surface = params.k_stiff * z + grad * v * v
    return np.where(z > 0.0, surface, 0.0)
