//! Deterministic simulator for indoor visible-light communication links built
//! around multi-branch transmitters.
//!
//! The crate models an empty rectangular room whose surfaces act as Lambertian
//! reflectors, traces line-of-sight plus first- and second-order reflection
//! paths from narrow-beam laser-diode branches to diversity receivers, and
//! derives the quantities a link designer cares about: illuminance grids,
//! impulse responses and their 3 dB bandwidth, OOK SNR/BER, subcarrier-tone
//! based transmitter allocation with co-channel interference, per-wavelength
//! SINR and achievable data rates, and occupancy-weighted SINR distributions.
//!
//! Everything is deterministic: random draws go through seeded generators and
//! parallel loops reduce in a fixed order, so equal inputs produce identical
//! outputs regardless of thread count.

pub mod channel;
pub mod emitters;
pub mod illumination;
pub mod linkbudget;
pub mod mobility;
pub mod receivers;
pub mod scenario;
pub mod scene;
pub mod scm_alloc;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
