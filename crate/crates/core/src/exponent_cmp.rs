//! Exponent comparator: difference blocks feeding a shared lookup table.
//!
//! The product exponent `e_p = e_a + e_b` and the addend exponent `e_c` are
//! subtracted once. The signed difference, clamped to the table span, indexes
//! a table built at construction that yields which side holds the reference
//! exponent and the alignment shift for the other side. The reference
//! exponent itself is a mux on the select bit.

use serde::{Deserialize, Serialize};

use crate::formats::FormatSpec;

/// Unbiased product exponent before normalization.
pub const fn product_exponent(ea: i32, eb: i32) -> i32 {
    ea + eb
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpCompareResult {
    pub e_ref: i32,
    /// Right shift for the product significand.
    pub shift_p: u32,
    /// Right shift for the addend significand.
    pub shift_c: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LutEntry {
    /// Addend holds the reference exponent.
    addend_is_ref: bool,
    shift: u32,
}

#[derive(Debug, Clone)]
pub struct ExponentComparator {
    /// Largest shift delivered; anything further is fully shifted out.
    max_shift: u32,
    lut: Vec<LutEntry>,
}

impl ExponentComparator {
    /// Builds the table for shifts up to `max_shift` (the accumulator width).
    pub fn new(max_shift: u32) -> Self {
        let span = max_shift as i32;
        let lut = (-span..=span)
            .map(|diff| LutEntry {
                addend_is_ref: diff < 0,
                shift: diff.unsigned_abs(),
            })
            .collect();
        ExponentComparator { max_shift, lut }
    }

    pub fn max_shift(&self) -> u32 {
        self.max_shift
    }

    pub fn table_len(&self) -> usize {
        self.lut.len()
    }

    pub fn compare_align(&self, e_p: i32, e_c: i32) -> ExpCompareResult {
        let span = self.max_shift as i32;
        let diff = (e_p - e_c).clamp(-span, span);
        let entry = self.lut[(diff + span) as usize];
        if entry.addend_is_ref {
            ExpCompareResult {
                e_ref: e_c,
                shift_p: entry.shift,
                shift_c: 0,
            }
        } else {
            ExpCompareResult {
                e_ref: e_p,
                shift_p: 0,
                shift_c: entry.shift,
            }
        }
    }
}

/// Reachable `(e_p, e_c)` ranges for a format: products span two operand
/// exponents, the addend one.
pub fn reachable_ranges(
    spec: &FormatSpec,
) -> (std::ops::RangeInclusive<i32>, std::ops::RangeInclusive<i32>) {
    let (lo, hi) = (spec.emin(), spec.emax());
    (2 * lo..=2 * hi, lo..=hi)
}
