//! Motion restriction control for a non-backdrivable planar end-effector.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`] and [`map`]: the discretised task space and the occupancy grid
//!   (the motion restriction map) with generators, editing and PGM storage.
//! - [`ievc`]: the implicit Euler velocity controller that keeps commanded
//!   motion inside the permitted area.
//! - [`admittance`]: virtual mass/friction/damper dynamics turning measured
//!   force into a desired velocity.
//! - [`impedance`]: convolution-built spring force maps and the assistance
//!   force composition used by the soft-boundary mode.
//! - [`plant`] and [`user`]: the simulated velocity-tracked gantry, its force
//!   sensor, and scripted user-force sources.
//! - [`session`]: operation modes composed into a deterministic, steppable
//!   control loop that records a [`session::SessionTrace`].
//! - [`metrics`]: off-loop analysis (distance to the permitted area, MAE).
//!
//! World coordinates are millimetres throughout; the admittance block works
//! in SI units internally.

pub mod admittance;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod grid;
pub mod ievc;
pub mod impedance;
pub mod map;
pub mod metrics;
pub mod pgm;
pub mod plant;
pub mod raster;
pub mod session;
pub mod user;

pub use error::{Error, Result};
pub use geometry::Vec2;
pub use grid::{Cell, GridGeometry};
pub use map::MotionRestrictionMap;
