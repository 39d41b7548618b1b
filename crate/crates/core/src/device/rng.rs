//! Hardware random number generator model.
//!
//! A 16-bit Galois LFSR with feedback polynomial x¹⁶+x¹⁴+x¹³+x¹¹+1 is
//! combined by XOR with a 16-cell null-boundary cellular automaton shift
//! register. The automaton uses a hybrid rule-90/rule-150 vector: cells
//! whose bit is set in [`CASR_RULE150`] include their own state in the
//! update. Both registers have period 2¹⁶ − 1, and the rule vector is
//! chosen so that the automaton shares the LFSR's characteristic
//! polynomial; the XOR of the two streams is then itself a maximal-length
//! sequence and its bytes are balanced over a full period.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pendulum::Action;

/// Galois feedback mask for x¹⁶+x¹⁴+x¹³+x¹¹+1.
pub const LFSR_TAPS: u16 = 0xB400;

/// Cells that follow rule 150; the rest follow rule 90.
pub const CASR_RULE150: u16 = 0x1278;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub lfsr: u16,
    pub casr: u16,
}

impl RngState {
    pub fn new(lfsr: u16, casr: u16) -> Result<Self> {
        if lfsr == 0 || casr == 0 {
            return Err(Error::config("RNG registers must be non-zero"));
        }
        let state = Self { lfsr, casr };
        if state.is_locked() {
            return Err(Error::config("RNG registers cancel each other out"));
        }
        Ok(state)
    }

    /// Derives a valid register pair from an arbitrary 64-bit seed.
    pub fn from_seed(seed: u64) -> Self {
        (0..)
            .find_map(|attempt| {
                let mixed = crate::seed::derive(seed, "rng8", attempt);
                Self::new(mixed as u16, (mixed >> 16) as u16).ok()
            })
            .expect("some attempt yields a valid state")
    }

    /// The two streams are linearly related, so a register pair can cancel
    /// to a constant-zero output. Sixteen consecutive zero bytes from an
    /// order-16 linear recurrence imply it stays zero.
    fn is_locked(&self) -> bool {
        let mut s = *self;
        (0..16).all(|_| {
            let (b, next) = rng8(s);
            s = next;
            b == 0
        })
    }
}

pub fn lfsr_step(state: u16) -> u16 {
    let lsb = state & 1;
    let shifted = state >> 1;
    if lsb == 1 {
        shifted ^ LFSR_TAPS
    } else {
        shifted
    }
}

pub fn casr_step(state: u16) -> u16 {
    (state << 1) ^ (state >> 1) ^ (state & CASR_RULE150)
}

/// Advances both registers and returns the XOR of their low bytes.
pub fn rng8(state: RngState) -> (u8, RngState) {
    let next = RngState {
        lfsr: lfsr_step(state.lfsr),
        casr: casr_step(state.casr),
    };
    ((next.lfsr ^ next.casr) as u8, next)
}

/// Quantizes a probability to an 8-bit code.
pub fn probability_code(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Comparator between the quantized probability and a random byte: CCW iff
/// the byte is below the probability code.
pub fn sample_action(p: f64, state: RngState) -> (Action, RngState) {
    let (byte, next) = rng8(state);
    (Action::from_bit(byte < probability_code(p)), next)
}
