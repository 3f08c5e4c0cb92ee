//! Return- and hitting-time statistics of small sets in infinite measure
//! preserving systems.
//!
//! The crate samples normalized return and hitting times in a few reference
//! systems, evaluates the limit laws that appear for regularly varying return
//! sequences, and discretizes the integral transforms relating return-time
//! laws to hitting-time laws.

pub mod error;
pub mod laws;
pub mod scaling;
pub mod simulate;
pub mod special;
pub mod systems;
pub mod transform;
pub mod verify;

pub use error::{Error, Result};
pub use laws::LimitLaw;
pub use scaling::ScalingFunction;
pub use simulate::{ks_distance, SubDistribution};
pub use systems::{State, SystemModel, TargetSpec};
pub use transform::{TransformKind, TransformSpec};
