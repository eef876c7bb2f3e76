//! Filter design and link-level simulation for a two-hop MIMO
//! amplify-and-forward network with three half-duplex relays, alternate
//! relaying and inter-relay interference alignment.

pub mod channel;
pub mod config;
pub mod error;
pub mod gradients;
pub mod ia;
pub mod linalg;
pub mod optimizer;
pub mod rng;
pub mod simulate;
pub mod system;

pub use error::{Error, Result};
pub use linalg::CMatrix;
pub use rng::RngStream;
