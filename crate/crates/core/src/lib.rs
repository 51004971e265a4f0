//! Simulator for a four-user time-division-multiplexed QKD receiver chip.
//!
//! One set of four single-photon detectors serves four BB84 transmitters:
//! an on-chip network of eight Mach-Zehnder switches routes the selected
//! user's polarization-encoded photons to a passive measurement stage,
//! while finite switch extinction lets a small fraction of the other users'
//! light leak through. The crate models the chip as a linear-optical
//! network, the transmitters/fiber/detectors as a parameterized link, and
//! evaluates decoy-state BB84 secret key rates and error rates both
//! analytically and by pulse-level Monte Carlo.
//!
//! Module map:
//! - [`linear_optics`]: complex amplitudes, transfer matrices, dB helpers.
//! - [`chip`]: the receiver chip (routing switches, measurement stage).
//! - [`link`]: source, channel and detector parameters.
//! - [`decoy`]: vacuum + weak-decoy bounds and the secret key rate.
//! - [`sim`]: seeded pulse-level Monte Carlo engine.
//! - [`network`]: TDM scheduling and crosstalk scenarios.

pub mod chip;
pub mod decoy;
pub mod error;
pub mod linear_optics;
pub mod link;
pub mod network;
pub mod sim;

pub use error::{Error, Result};
