//! Physical constants and episode caps for the classic-control tasks.
//!
//! Values follow the widely used reference implementations of these tasks so
//! that runs are comparable with published tabular results.

use std::f64::consts::PI;

pub mod mountain_car {
    pub const MIN_POSITION: f64 = -1.2;
    pub const MAX_POSITION: f64 = 0.6;
    pub const MAX_SPEED: f64 = 0.07;
    pub const GOAL_POSITION: f64 = 0.5;
    pub const GOAL_VELOCITY: f64 = 0.0;
    pub const FORCE: f64 = 0.001;
    pub const GRAVITY: f64 = 0.0025;
    /// Initial position is uniform on this range, velocity starts at zero.
    pub const INIT_POSITION: (f64, f64) = (-0.6, -0.4);
    pub const STEP_CAP: usize = 200;
    pub const N_ACTIONS: usize = 3;
}

pub mod cart_pole {
    pub const GRAVITY: f64 = 9.8;
    pub const MASS_CART: f64 = 1.0;
    pub const MASS_POLE: f64 = 0.1;
    pub const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
    /// Half the pole's length.
    pub const HALF_LENGTH: f64 = 0.5;
    pub const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
    pub const FORCE_MAG: f64 = 10.0;
    /// Seconds per (explicit Euler) step.
    pub const TAU: f64 = 0.02;
    pub const X_THRESHOLD: f64 = 2.4;
    pub const THETA_THRESHOLD: f64 = 12.0 * 2.0 * super::PI / 360.0;
    /// Every state component starts uniform on `±INIT_RANGE`.
    pub const INIT_RANGE: f64 = 0.05;
    /// Clamp range used by the default grid for the two velocity components.
    pub const VELOCITY_CLAMP: f64 = 3.0;
    pub const STEP_CAP: usize = 500;
    pub const N_ACTIONS: usize = 2;
}

pub mod acrobot {
    pub const DT: f64 = 0.2;
    pub const LINK_LENGTH_1: f64 = 1.0;
    pub const LINK_MASS_1: f64 = 1.0;
    pub const LINK_MASS_2: f64 = 1.0;
    pub const LINK_COM_POS_1: f64 = 0.5;
    pub const LINK_COM_POS_2: f64 = 0.5;
    pub const LINK_MOI: f64 = 1.0;
    pub const GRAVITY: f64 = 9.8;
    pub const MAX_VEL_1: f64 = 4.0 * super::PI;
    pub const MAX_VEL_2: f64 = 9.0 * super::PI;
    pub const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];
    /// Every state component starts uniform on `±INIT_RANGE`.
    pub const INIT_RANGE: f64 = 0.1;
    /// Tip height above the pivot that ends the episode.
    pub const TARGET_HEIGHT: f64 = 1.0;
    pub const STEP_CAP: usize = 500;
    pub const N_ACTIONS: usize = 3;
    /// Bins per dimension of the default (10^6-cell) grid.
    pub const DEFAULT_BINS: usize = 10;
}
