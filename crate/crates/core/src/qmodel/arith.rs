//! Fixed-point helpers shared by the reference inference path and the
//! circuit generators.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Width of every activation and weight in the network.
pub const ACT_WIDTH: u32 = 8;
/// Smallest accumulator width a layer may declare.
pub const MIN_ACC_WIDTH: u32 = 9;
/// Largest accumulator width supported by the requantizer arithmetic.
pub const MAX_ACC_WIDTH: u32 = 40;
/// Requantizer multipliers are unsigned 15-bit values.
pub const REQUANT_M_BITS: u32 = 15;
/// Largest right shift a requantizer may apply.
pub const MAX_REQUANT_SHIFT: u32 = 31;

/// Minimum two's-complement width able to represent `v`.
pub fn bits_needed_signed(v: i64) -> u32 {
    let magnitude = if v < 0 { !v } else { v };
    64 - magnitude.leading_zeros() + 1
}

/// Inclusive range of a `width`-bit two's-complement value.
pub fn signed_range(width: u32) -> (i64, i64) {
    debug_assert!((1..=63).contains(&width));
    let half = 1i64 << (width - 1);
    (-half, half - 1)
}

/// Clamp `v` into the `width`-bit two's-complement range.
pub fn saturate(v: i64, width: u32) -> i64 {
    let (lo, hi) = signed_range(width);
    v.clamp(lo, hi)
}

/// Fixed-point rescaling `acc * m / 2^s`, rounded half-up, clamped to int8.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequantParams {
    pub m: u32,
    pub s: u32,
}

impl RequantParams {
    /// Scale of exactly 1.0 (`m = 2^14`, `s = 14`).
    pub const IDENTITY: RequantParams = RequantParams { m: 1 << 14, s: 14 };

    pub fn new(m: u32, s: u32) -> Result<Self, ModelError> {
        let p = RequantParams { m, s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.m >= 1 << REQUANT_M_BITS {
            return Err(ModelError::Requant(format!(
                "multiplier {} does not fit in {REQUANT_M_BITS} bits",
                self.m
            )));
        }
        if self.s > MAX_REQUANT_SHIFT {
            return Err(ModelError::Requant(format!(
                "shift {} exceeds {MAX_REQUANT_SHIFT}",
                self.s
            )));
        }
        Ok(())
    }

    /// The rounding addend, `2^(s-1)` or 0 when `s == 0`.
    pub fn round_addend(&self) -> i64 {
        if self.s == 0 {
            0
        } else {
            1i64 << (self.s - 1)
        }
    }

    /// The real scale factor this pair encodes.
    pub fn scale(&self) -> f64 {
        self.m as f64 / (1u64 << self.s) as f64
    }
}

/// Rescale a wide accumulator down to a signed 8-bit activation.
///
/// Computes `clamp((acc * m + 2^(s-1)) >> s)` with an arithmetic shift.
pub fn requantize(acc: i64, p: RequantParams) -> i8 {
    debug_assert!(acc.unsigned_abs() < 1 << 40);
    let scaled = (acc * p.m as i64 + p.round_addend()) >> p.s;
    saturate(scaled, ACT_WIDTH) as i8
}

/// Find `(m, s)` with `m / 2^s` close to `scale`.
///
/// `m` is kept in `[2^14, 2^15)` whenever the shift budget allows it, which
/// bounds the relative error by `2^-14`.
pub fn derive_requant_params(scale: f64) -> Result<RequantParams, ModelError> {
    if !(scale.is_finite() && scale > 0.0 && scale < 1.0) {
        return Err(ModelError::Requant(format!(
            "scale {scale} outside (0, 1)"
        )));
    }
    let lo = (1u64 << (REQUANT_M_BITS - 1)) as f64;
    let hi = (1u64 << REQUANT_M_BITS) as f64;
    let mut s = 0u32;
    while s < MAX_REQUANT_SHIFT && scale * ((1u64 << s) as f64) < lo {
        s += 1;
    }
    let mut m = (scale * (1u64 << s) as f64).round();
    if m >= hi {
        // rounding pushed m to 2^15; halve and shift one less
        m = lo;
        s -= 1;
    }
    if m < 1.0 {
        return Err(ModelError::Requant(format!(
            "scale {scale} is below the representable minimum"
        )));
    }
    RequantParams::new(m as u32, s)
}
