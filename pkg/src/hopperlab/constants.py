"""Physical constants used throughout the package."""

GRAVITY = 9.81  # m/s^2, standard gravity

# Below this |dL/dtheta| the torque-to-force map is treated as singular.
JACOBIAN_EPSILON = 1e-4  # m/rad
