//! Minifloat formats: descriptors, decode, encode, and operand word packing.
//!
//! Four formats are modeled. Field layout is sign, exponent, mantissa from
//! the most significant bit down.
//!
//! | format | bits | exp | man | bias | specials                     |
//! |--------|------|-----|-----|------|------------------------------|
//! | E4M3   | 8    | 4   | 3   | 7    | `S.1111.111` is NaN, no Inf  |
//! | E5M2   | 8    | 5   | 2   | 15   | IEEE-like Inf and NaN        |
//! | E2M1   | 4    | 2   | 1   | 1    | none                         |
//! | E1M2   | 4    | 1   | 2   | 1    | none                         |
//!
//! Subnormals are supported everywhere. Encoding never rounds: callers hand
//! in an already-truncated value and overflow saturates (or goes to Inf for
//! E5M2).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scalar::{Scalar, ValueRow};
use crate::ValueTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    E4M3,
    E5M2,
    E2M1,
    E1M2,
}

impl Format {
    pub const ALL: [Format; 4] = [Format::E4M3, Format::E5M2, Format::E2M1, Format::E1M2];

    pub const fn spec(self) -> &'static FormatSpec {
        match self {
            Format::E4M3 => &E4M3,
            Format::E5M2 => &E5M2,
            Format::E2M1 => &E2M1,
            Format::E1M2 => &E1M2,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Format::E4M3 => "e4m3",
            Format::E5M2 => "e5m2",
            Format::E2M1 => "e2m1",
            Format::E1M2 => "e1m2",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "e4m3" => Ok(Format::E4M3),
            "e5m2" => Ok(Format::E5M2),
            "e2m1" => Ok(Format::E2M1),
            "e1m2" => Ok(Format::E1M2),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

/// Static descriptor of a minifloat format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FormatSpec {
    pub format: Format,
    pub total_bits: u32,
    pub exp_bits: u32,
    pub man_bits: u32,
    pub bias: i32,
    pub has_infinity: bool,
    pub has_nan: bool,
}

pub const E4M3: FormatSpec = FormatSpec {
    format: Format::E4M3,
    total_bits: 8,
    exp_bits: 4,
    man_bits: 3,
    bias: 7,
    has_infinity: false,
    has_nan: true,
};

pub const E5M2: FormatSpec = FormatSpec {
    format: Format::E5M2,
    total_bits: 8,
    exp_bits: 5,
    man_bits: 2,
    bias: 15,
    has_infinity: true,
    has_nan: true,
};

pub const E2M1: FormatSpec = FormatSpec {
    format: Format::E2M1,
    total_bits: 4,
    exp_bits: 2,
    man_bits: 1,
    bias: 1,
    has_infinity: false,
    has_nan: false,
};

pub const E1M2: FormatSpec = FormatSpec {
    format: Format::E1M2,
    total_bits: 4,
    exp_bits: 1,
    man_bits: 2,
    bias: 1,
    has_infinity: false,
    has_nan: false,
};

impl FormatSpec {
    /// Mask covering all bits of one encoded value.
    pub const fn mask(&self) -> u8 {
        ((1u16 << self.total_bits) - 1) as u8
    }

    pub const fn sign_mask(&self) -> u8 {
        1 << (self.total_bits - 1)
    }

    pub const fn man_mask(&self) -> u8 {
        (1 << self.man_bits) - 1
    }

    const fn exp_field_max(&self) -> u32 {
        (1 << self.exp_bits) - 1
    }

    /// Exponent shared by subnormals and the smallest normal binade.
    pub const fn emin(&self) -> i32 {
        1 - self.bias
    }

    /// Exponent of the largest finite binade.
    pub const fn emax(&self) -> i32 {
        let top = if self.has_infinity {
            self.exp_field_max() - 1
        } else {
            self.exp_field_max()
        };
        top as i32 - self.bias
    }

    /// Largest significand (hidden bit included) allowed in the `emax` binade.
    pub const fn max_significand(&self) -> u32 {
        let full = (2 << self.man_bits) - 1;
        // E4M3 spends the all-ones mantissa of the top binade on NaN.
        if self.has_nan && !self.has_infinity {
            full - 1
        } else {
            full
        }
    }

    /// Positive max-finite pattern.
    pub const fn max_finite(&self) -> u8 {
        let field = (self.emax() + self.bias) as u32;
        let man = self.max_significand() & ((1 << self.man_bits) - 1);
        ((field << self.man_bits) | man) as u8
    }

    pub const fn canonical_nan(&self) -> Option<u8> {
        if !self.has_nan {
            None
        } else if self.has_infinity {
            // quiet NaN: top mantissa bit set
            Some(((self.exp_field_max() << self.man_bits) | (1 << (self.man_bits - 1))) as u8)
        } else {
            Some(((self.exp_field_max() << self.man_bits) | ((1 << self.man_bits) - 1)) as u8)
        }
    }

    pub const fn infinity(&self, negative: bool) -> Option<u8> {
        if !self.has_infinity {
            return None;
        }
        let sign = if negative { self.sign_mask() } else { 0 };
        Some(sign | (self.exp_field_max() << self.man_bits) as u8)
    }

    /// All bit patterns of the format, in numeric order of the pattern.
    pub fn patterns(&self) -> impl Iterator<Item = u8> {
        (0..(1u16 << self.total_bits)).map(|p| p as u8)
    }

    pub fn is_nan(&self, bits: u8) -> bool {
        decode(bits, self).class == FloatClass::NaN
    }

    /// Renders a pattern as hex sized to the format (`0x4E`, `0x7`).
    pub fn hex(&self, bits: u8) -> String {
        if self.total_bits == 8 {
            format!("0x{bits:02X}")
        } else {
            format!("0x{bits:X}")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FloatClass {
    Zero,
    Subnormal,
    Normal,
    Inf,
    NaN,
}

impl FloatClass {
    pub fn is_finite(self) -> bool {
        !matches!(self, FloatClass::Inf | FloatClass::NaN)
    }
}

/// An unpacked operand.
///
/// The significand is a fixed-point integer with `man_bits` fraction bits,
/// so the value is `(-1)^negative * significand * 2^(exp - man_bits)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedFloat {
    pub negative: bool,
    pub exp: i32,
    pub significand: u32,
    pub class: FloatClass,
}

impl DecodedFloat {
    pub const fn zero(negative: bool, spec: &FormatSpec) -> Self {
        DecodedFloat {
            negative,
            exp: spec.emin(),
            significand: 0,
            class: FloatClass::Zero,
        }
    }

    pub const fn nan() -> Self {
        DecodedFloat {
            negative: false,
            exp: 0,
            significand: 0,
            class: FloatClass::NaN,
        }
    }

    pub const fn infinity(negative: bool) -> Self {
        DecodedFloat {
            negative,
            exp: 0,
            significand: 0,
            class: FloatClass::Inf,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.class == FloatClass::Zero
    }

    /// Value in a host scalar; `None` when the host lacks the class.
    pub fn value<T: Scalar>(&self, spec: &FormatSpec) -> Option<T> {
        match self.class {
            FloatClass::NaN => T::nan(),
            FloatClass::Inf => T::infinity(self.negative),
            _ => Some(T::from_scaled(
                self.negative,
                u128::from(self.significand),
                self.exp - spec.man_bits as i32,
            )),
        }
    }
}

/// Splits a pattern into sign, exponent and significand, classifying specials.
pub fn decode(bits: u8, spec: &FormatSpec) -> DecodedFloat {
    debug_assert_eq!(
        bits & !spec.mask(),
        0,
        "pattern wider than {:?}",
        spec.format
    );
    let bits = bits & spec.mask();
    let negative = bits & spec.sign_mask() != 0;
    let man = u32::from(bits & spec.man_mask());
    let field = (u32::from(bits) >> spec.man_bits) & spec.exp_field_max();

    if field == spec.exp_field_max() {
        if spec.has_infinity {
            return if man == 0 {
                DecodedFloat::infinity(negative)
            } else {
                DecodedFloat {
                    negative,
                    exp: 0,
                    significand: man,
                    class: FloatClass::NaN,
                }
            };
        }
        if spec.has_nan && man == u32::from(spec.man_mask()) {
            return DecodedFloat {
                negative,
                exp: 0,
                significand: man,
                class: FloatClass::NaN,
            };
        }
    }

    if field == 0 {
        let class = if man == 0 {
            FloatClass::Zero
        } else {
            FloatClass::Subnormal
        };
        DecodedFloat {
            negative,
            exp: spec.emin(),
            significand: man,
            class,
        }
    } else {
        DecodedFloat {
            negative,
            exp: field as i32 - spec.bias,
            significand: man | (1 << spec.man_bits),
            class: FloatClass::Normal,
        }
    }
}

/// An encoded pattern plus the conditions raised while packing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Encoded {
    pub bits: u8,
    pub overflow: bool,
    pub invalid: bool,
}

/// Packs a normalized value into the format.
///
/// `v` must already be truncated to `man_bits` fraction bits: a normal
/// significand in `[2^m, 2^(m+1))` or a subnormal one below `2^m` at `emin`.
/// Exponents above `emax` saturate to max finite, or to Inf where the format
/// has one. NaN becomes the canonical NaN; formats without NaN saturate and
/// flag `invalid`.
pub fn encode(v: &DecodedFloat, spec: &FormatSpec) -> Encoded {
    let sign = if v.negative { spec.sign_mask() } else { 0 };
    let saturate = |negative: bool| {
        let bits = spec.infinity(negative).unwrap_or(sign | spec.max_finite());
        Encoded {
            bits,
            overflow: true,
            invalid: false,
        }
    };

    match v.class {
        FloatClass::NaN => match spec.canonical_nan() {
            Some(bits) => Encoded {
                bits,
                overflow: false,
                invalid: false,
            },
            None => Encoded {
                bits: spec.max_finite(),
                overflow: false,
                invalid: true,
            },
        },
        FloatClass::Inf => match spec.infinity(v.negative) {
            Some(bits) => Encoded {
                bits,
                ..Default::default()
            },
            None => saturate(v.negative),
        },
        FloatClass::Zero => Encoded {
            bits: sign,
            ..Default::default()
        },
        FloatClass::Subnormal => {
            debug_assert!(v.significand < 1 << spec.man_bits);
            Encoded {
                bits: sign | v.significand as u8,
                ..Default::default()
            }
        }
        FloatClass::Normal => {
            debug_assert!(
                v.significand >> spec.man_bits == 1,
                "unnormalized significand"
            );
            if v.exp > spec.emax()
                || (v.exp == spec.emax() && v.significand > spec.max_significand())
            {
                return saturate(v.negative);
            }
            if v.exp < spec.emin() {
                // Below the normal range: denormalize, dropping low bits.
                let shift = (spec.emin() - v.exp) as u32;
                let man = v.significand.checked_shr(shift).unwrap_or(0);
                return Encoded {
                    bits: sign | man as u8,
                    ..Default::default()
                };
            }
            let field = (v.exp + spec.bias) as u32;
            let man = v.significand & u32::from(spec.man_mask());
            Encoded {
                bits: sign | ((field << spec.man_bits) | man) as u8,
                ..Default::default()
            }
        }
    }
}

/// Every pattern of a format with its class and value in `T`.
pub fn value_table<T: Scalar>(format: Format) -> ValueTable<T> {
    let spec = format.spec();
    spec.patterns()
        .map(|bits| {
            let d = decode(bits, spec);
            ValueRow {
                bits,
                class: d.class,
                value: d.value(spec),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    SingleFp8,
    DualFp4,
}

/// An 8-bit operand word: one FP8 value or two FP4 lanes.
///
/// In the dual layout bits `[7:4]` hold lane 1 and bits `[3:0]` lane 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PackedWord {
    pub bits: u8,
    pub layout: Layout,
}

impl PackedWord {
    pub const fn single(bits: u8) -> Self {
        PackedWord {
            bits,
            layout: Layout::SingleFp8,
        }
    }

    /// A lone 4-bit value in a single-value word, zero-padded on the left.
    pub const fn padded_fp4(nibble: u8) -> Self {
        PackedWord {
            bits: nibble & 0x0F,
            layout: Layout::SingleFp8,
        }
    }

    pub const fn dual_raw(bits: u8) -> Self {
        PackedWord {
            bits,
            layout: Layout::DualFp4,
        }
    }

    pub const fn lanes(&self) -> usize {
        match self.layout {
            Layout::SingleFp8 => 1,
            Layout::DualFp4 => 2,
        }
    }

    /// Raw bits of lane `idx` (0 = low nibble in dual layout).
    pub const fn lane(&self, idx: usize) -> u8 {
        match self.layout {
            Layout::SingleFp8 => self.bits,
            Layout::DualFp4 => {
                if idx == 0 {
                    self.bits & 0x0F
                } else {
                    self.bits >> 4
                }
            }
        }
    }
}

pub const fn pack_dual(lane1: u8, lane0: u8) -> PackedWord {
    PackedWord::dual_raw(((lane1 & 0x0F) << 4) | (lane0 & 0x0F))
}

/// Inverse of [`pack_dual`]: `(lane1, lane0)`.
pub const fn unpack_dual(word: u8) -> (u8, u8) {
    (word >> 4, word & 0x0F)
}
