//! Canonical signed-digit (non-adjacent form) encoding of constants.

use serde::{Deserialize, Serialize};

/// One nonzero digit `sign * 2^position`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CsdDigit {
    pub position: u32,
    /// `+1` or `-1`.
    pub sign: i8,
}

impl CsdDigit {
    pub fn value(self) -> i64 {
        self.sign as i64 * (1i64 << self.position)
    }
}

/// Non-adjacent form of `w`, least significant digit first. No two digits
/// occupy adjacent positions and the digit count is minimal.
pub fn csd_encode(w: i64) -> Vec<CsdDigit> {
    assert!(w.unsigned_abs() < 1 << 62, "constant out of range");
    let mut v = w;
    let mut pos = 0;
    let mut digits = Vec::new();
    while v != 0 {
        if v & 1 == 1 {
            // v mod 4 == 1 -> +1, v mod 4 == 3 -> -1
            let d: i64 = if v & 3 == 1 { 1 } else { -1 };
            digits.push(CsdDigit {
                position: pos,
                sign: d as i8,
            });
            v -= d;
        }
        v >>= 1;
        pos += 1;
    }
    digits
}

pub fn csd_value(digits: &[CsdDigit]) -> i64 {
    digits.iter().map(|d| d.value()).sum()
}
