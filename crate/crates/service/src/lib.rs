//! Live control-loop service.
//!
//! One TCP connection per client carries length-prefixed JSON frames (see
//! [`protocol`]). The control loop runs on its own thread at the session
//! timestep and talks to the I/O threads only through lock-free queues, so a
//! stalled client can never delay a step.

pub mod client;
mod error;
pub mod protocol;
pub mod server;

pub use client::Client;
pub use error::{Result, ServiceError};
pub use server::{serve, ServiceConfig, ServiceHandle};
