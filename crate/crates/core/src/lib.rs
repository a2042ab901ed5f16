//! Learning the fields of a disordered toric code from local stabilizer
//! measurements, and correcting them.

pub mod error;
pub mod exact;
pub mod fields;
pub mod gibbs;
pub mod lattice;
pub mod measurement;
pub mod metrics;
pub mod learner;
pub mod network;
pub mod phase;
pub mod rng;

pub use error::{Error, Result};
pub use fields::{FieldConfig, B_CAP};
pub use lattice::Lattice;
pub use measurement::{MeasurementSet, SectorMeasurement};
pub use rng::Seed;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
