//! Angle conversions and the fixed physical constants of the gain parameterisation.

use std::f64::consts::PI;

/// Radians per degree.
pub const RAD_PER_DEG: f64 = PI / 180.0;

/// Degrees per radian.
pub const DEG_PER_RAD: f64 = 180.0 / PI;

/// Reference stiffness of the impedance parameterisation: 1 Nm/deg expressed in Nm/rad.
pub const KAPPA0_NM_PER_RAD: f64 = DEG_PER_RAD;

/// Default viscosity-to-stiffness ratio (s).
pub const DEFAULT_VISCOELASTIC_RATIO: f64 = 0.01;

/// Inertia of the wrist interface with a hand attached (kg·m²).
pub const DEFAULT_INERTIA: f64 = 0.0080;

/// Connection stiffness used when designing impedance (Nm/rad).
pub const DESIGN_CONNECTION_STIFFNESS: f64 = 17.32;

/// Connection stiffness used in the coupled experiments (Nm/rad).
pub const EXPERIMENT_CONNECTION_STIFFNESS: f64 = 17.2;

#[inline]
pub fn deg_to_rad(deg: f64) -> f64 {
    deg * RAD_PER_DEG
}

#[inline]
pub fn rad_to_deg(rad: f64) -> f64 {
    rad * DEG_PER_RAD
}
