//! Online instance-as-identity tracking engine.
//!
//! Every detection in a frame is resolved to a globally unique instance ID,
//! the IDs are painted into a one-hot ID mask and embedded through a fixed
//! identity bank, and the resulting ID embedding is stored in a global
//! (first frame) and local (previous frame) memory that the next frame
//! attends to.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;

pub mod association;
pub mod error;
pub mod identity;
pub mod losses;
pub mod mask;
pub mod mathkit;
pub mod metrics;
pub mod postproc;
pub mod synthworld;
pub mod toyhead;
pub mod tracker;

pub use error::{Error, Result};
pub use mask::Mask;
pub use mathkit::Matrix;
