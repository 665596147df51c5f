//! Reconfigurable 4-bit unit multiplier.
//!
//! The sixteen AND terms `a_i & b_j` form a partial-product array. A mode
//! mask gates the terms: in full mode every term is live and the array
//! computes one unsigned 4x4 product; in split mode the cross-partition
//! terms (one index in `{0,1}`, the other in `{2,3}`) are gated off, which
//! leaves two independent 2x2 products at weights `2^0` and `2^4`.

use serde::{Deserialize, Serialize};

/// Operand width of the unit multiplier.
pub const UNIT_BITS: usize = 4;

/// Split boundary: indices below this belong to the low segment.
const SEGMENT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MulMode {
    /// `m = 0`: one 4x4 product.
    Full,
    /// `m = 1`: two 2x2 products.
    Split,
}

impl MulMode {
    pub const fn bit(self) -> u8 {
        match self {
            MulMode::Full => 0,
            MulMode::Split => 1,
        }
    }
}

/// Which partial products `a_i b_j` are enabled, indexed `[i][j]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartialProductMask {
    pub delta: [[bool; UNIT_BITS]; UNIT_BITS],
}

impl PartialProductMask {
    pub const fn for_mode(mode: MulMode) -> Self {
        let mut delta = [[true; UNIT_BITS]; UNIT_BITS];
        if let MulMode::Split = mode {
            let mut i = 0;
            while i < UNIT_BITS {
                let mut j = 0;
                while j < UNIT_BITS {
                    delta[i][j] = (i < SEGMENT) == (j < SEGMENT);
                    j += 1;
                }
                i += 1;
            }
        }
        PartialProductMask { delta }
    }

    pub fn live_terms(&self) -> usize {
        self.delta.iter().flatten().filter(|&&d| d).count()
    }
}

fn bit(x: u8, i: usize) -> u8 {
    (x >> i) & 1
}

/// One-bit full adder: `(sum, carry_out)`.
fn full_add(a: u8, b: u8, cin: u8) -> (u8, u8) {
    (a ^ b ^ cin, (a & b) | (a & cin) | (b & cin))
}

/// Ripple-carry sum of two 8-bit rows, bit by bit.
fn ripple_add8(x: u8, y: u8) -> u8 {
    let mut out = 0u8;
    let mut carry = 0u8;
    for k in 0..8 {
        let (s, c) = full_add(bit(x, k), bit(y, k), carry);
        out |= s << k;
        carry = c;
    }
    out
}

/// Gated partial-product rows: row `i` holds `a_i & b_j` at bit `i + j`.
pub fn partial_product_rows(a: u8, b: u8, mode: MulMode) -> [u8; UNIT_BITS] {
    let mask = PartialProductMask::for_mode(mode);
    let mut rows = [0u8; UNIT_BITS];
    for (i, row) in rows.iter_mut().enumerate() {
        for j in 0..UNIT_BITS {
            let term = bit(a, i) & bit(b, j) & u8::from(mask.delta[i][j]);
            *row |= term << (i + j);
        }
    }
    rows
}

/// Multiplies two 4-bit operands on the shared partial-product array.
///
/// Full mode returns the 8-bit product `a * b`. Split mode returns
/// `a[3:2] * b[3:2]` in bits `[7:4]` and `a[1:0] * b[1:0]` in bits `[3:0]`.
pub fn unit_multiply(a: u8, b: u8, mode: MulMode) -> u8 {
    debug_assert!(a < 16 && b < 16, "unit multiplier operands are 4-bit");
    partial_product_rows(a & 0x0F, b & 0x0F, mode)
        .into_iter()
        .fold(0, ripple_add8)
}

/// Literal masked double sum `sum_ij delta(i,j) a_i b_j 2^(i+j)`.
pub fn masked_ppsum(a: u8, b: u8, mode: MulMode) -> u32 {
    let mask = PartialProductMask::for_mode(mode);
    let mut total = 0u32;
    for i in 0..UNIT_BITS {
        for j in 0..UNIT_BITS {
            if mask.delta[i][j] {
                total += u32::from(bit(a, i)) * u32::from(bit(b, j)) * (1 << (i + j));
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_shapes() {
        let full = PartialProductMask::for_mode(MulMode::Full);
        assert_eq!(full.live_terms(), 16);
        let split = PartialProductMask::for_mode(MulMode::Split);
        assert_eq!(split.live_terms(), 8);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(split.delta[i][j], (i < 2 && j < 2) || (i >= 2 && j >= 2));
            }
        }
    }

    #[test]
    fn examples() {
        assert_eq!(unit_multiply(0b1111, 0b1111, MulMode::Full), 0b1110_0001);
        assert_eq!(unit_multiply(0b1110, 0b0111, MulMode::Split), 0b0011_0110);
        for x in 0..16 {
            assert_eq!(unit_multiply(x, 0, MulMode::Full), 0);
            assert_eq!(unit_multiply(x, 0, MulMode::Split), 0);
        }
        assert_eq!(masked_ppsum(0b0001, 0b0001, MulMode::Full), 1);
        assert_eq!(masked_ppsum(0b0100, 0b0010, MulMode::Full), 8);
        assert_eq!(masked_ppsum(0b0110, 0b0110, MulMode::Split), 20);
    }

    #[test]
    fn exhaustive_against_host_multiply() {
        for a in 0..16u8 {
            for b in 0..16u8 {
                let full = unit_multiply(a, b, MulMode::Full);
                assert_eq!(u32::from(full), u32::from(a) * u32::from(b));
                let split = unit_multiply(a, b, MulMode::Split);
                assert_eq!(split >> 4, (a >> 2) * (b >> 2));
                assert_eq!(split & 0xF, (a & 3) * (b & 3));
                assert_eq!(u32::from(split), masked_ppsum(a, b, MulMode::Split));
                assert_eq!(u32::from(full), masked_ppsum(a, b, MulMode::Full));
                assert!(masked_ppsum(a, b, MulMode::Split) <= masked_ppsum(a, b, MulMode::Full));
                assert_eq!(split, unit_multiply(b, a, MulMode::Split));
                assert_eq!(full, unit_multiply(b, a, MulMode::Full));
            }
        }
    }

    #[test]
    fn split_drops_exactly_the_cross_terms() {
        for a in 0..16u8 {
            for b in 0..16u8 {
                let cross: u32 = (0..4)
                    .flat_map(|i| (0..4).map(move |j| (i, j)))
                    .filter(|&(i, j)| (i < 2) != (j < 2))
                    .map(|(i, j)| u32::from(bit(a, i) & bit(b, j)) << (i + j))
                    .sum();
                assert_eq!(
                    masked_ppsum(a, b, MulMode::Split),
                    masked_ppsum(a, b, MulMode::Full) - cross
                );
            }
        }
    }
}
