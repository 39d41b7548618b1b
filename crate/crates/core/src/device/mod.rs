//! Memristive device and crossbar models.
//!
//! Weights are stored as differential conductance pairs. Three write paths
//! are modeled: direct ("exact") programming, the fixed-pulse Manhattan
//! rule, and variable-amplitude programming with log-scaled line voltages.
//! The read path is noiseless apart from the 8-bit output converter.

pub mod adc;
pub mod cell;
pub mod crossbar;
pub mod rng;

pub use adc::{adc_quantize, ADC_BITS};
pub use cell::{DeviceCell, DeviceParams, VariationMode, MANHATTAN_STEP_FRACTION, NOMINAL_THRESHOLD};
pub use crossbar::{Crossbar, CrossbarNet, DifferentialPair, ProgramReport};
pub use rng::{rng8, sample_action, RngState};
