//! Functional model of the six-stage MAC datapath.
//!
//! Each stage is a plain function from the previous stage's latch contents
//! to its own, so the one-shot [`mac`] and the cycle-level pipeline run the
//! same code:
//!
//! * S0 decode operands per lane and detect specials
//! * S1 sign XOR, significand products on the unit multiplier, exponent compare
//! * S2 truncating alignment shift, then complement of negative terms
//! * S3 3:2 carry-save reduction and carry-select final add
//! * S4 leading-zero count, normalization and truncation to the format
//! * S5 optional ReLU and encode
//!
//! Significands are fixed-point integers. A product of two `m`-fraction-bit
//! significands has `2m` fraction bits; the addend is shifted up by `m` to
//! match and both gain `guard_bits` extra low bits before alignment. The
//! accumulator is `W = 2(m+1) + guard_bits + 2` bits of two's complement.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent_cmp::{product_exponent, ExpCompareResult, ExponentComparator};
use crate::formats::{
    decode, encode, DecodedFloat, FloatClass, Format, FormatSpec, Layout, PackedWord,
};
use crate::unit_mult::{unit_multiply, MulMode};

pub const DEFAULT_GUARD_BITS: u32 = 3;
/// Enough for exact alignment in every supported format.
pub const MAX_GUARD_BITS: u32 = 64;
/// Block size of the carry-select adder.
pub const CSLA_BLOCK: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MacMode {
    #[serde(rename = "e4m3")]
    E4M3,
    #[serde(rename = "e5m2")]
    E5M2,
    #[serde(rename = "dual-e2m1")]
    DualE2M1,
    #[serde(rename = "dual-e1m2")]
    DualE1M2,
}

impl MacMode {
    pub const ALL: [MacMode; 4] = [
        MacMode::E4M3,
        MacMode::E5M2,
        MacMode::DualE2M1,
        MacMode::DualE1M2,
    ];

    pub const fn format(self) -> Format {
        match self {
            MacMode::E4M3 => Format::E4M3,
            MacMode::E5M2 => Format::E5M2,
            MacMode::DualE2M1 => Format::E2M1,
            MacMode::DualE1M2 => Format::E1M2,
        }
    }

    pub const fn spec(self) -> &'static FormatSpec {
        self.format().spec()
    }

    pub const fn lanes(self) -> usize {
        match self {
            MacMode::E4M3 | MacMode::E5M2 => 1,
            MacMode::DualE2M1 | MacMode::DualE1M2 => 2,
        }
    }

    pub const fn layout(self) -> Layout {
        match self {
            MacMode::E4M3 | MacMode::E5M2 => Layout::SingleFp8,
            MacMode::DualE2M1 | MacMode::DualE1M2 => Layout::DualFp4,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            MacMode::E4M3 => "e4m3",
            MacMode::E5M2 => "e5m2",
            MacMode::DualE2M1 => "dual-e2m1",
            MacMode::DualE1M2 => "dual-e1m2",
        }
    }

    /// Wraps raw operand bits in the word layout this mode uses.
    pub const fn word(self, bits: u8) -> PackedWord {
        PackedWord {
            bits,
            layout: self.layout(),
        }
    }
}

impl fmt::Display for MacMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MacMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "e4m3" => Ok(MacMode::E4M3),
            "e5m2" => Ok(MacMode::E5M2),
            "dual-e2m1" | "e2m1" => Ok(MacMode::DualE2M1),
            "dual-e1m2" | "e1m2" => Ok(MacMode::DualE1M2),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacConfig {
    pub mode: MacMode,
    pub guard_bits: u32,
    pub relu: bool,
    /// Feed each result back as the next addend.
    pub accumulate_chain: bool,
}

impl MacConfig {
    pub const fn new(mode: MacMode) -> Self {
        MacConfig {
            mode,
            guard_bits: DEFAULT_GUARD_BITS,
            relu: true,
            accumulate_chain: false,
        }
    }

    pub fn with_guard_bits(mut self, guard_bits: u32) -> Result<Self> {
        if guard_bits > MAX_GUARD_BITS {
            return Err(Error::GuardBits(guard_bits));
        }
        self.guard_bits = guard_bits;
        Ok(self)
    }

    pub const fn with_relu(mut self, relu: bool) -> Self {
        self.relu = relu;
        self
    }

    pub const fn with_chain(mut self, chain: bool) -> Self {
        self.accumulate_chain = chain;
        self
    }

    pub const fn spec(&self) -> &'static FormatSpec {
        self.mode.spec()
    }

    pub const fn width(&self) -> u32 {
        accumulator_width(self.spec().man_bits, self.guard_bits)
    }

    /// Bit index that carries weight `2^e_ref` in the aligned terms.
    const fn binary_point(&self) -> u32 {
        2 * self.spec().man_bits + self.guard_bits
    }
}

pub const fn accumulator_width(man_bits: u32, guard_bits: u32) -> u32 {
    2 * (man_bits + 1) + guard_bits + 2
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Flags {
    pub overflow: bool,
    pub underflow: bool,
    pub invalid: bool,
    pub inexact: bool,
}

impl Flags {
    pub fn any(&self) -> bool {
        self.overflow || self.underflow || self.invalid || self.inexact
    }
}

impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.overflow, "overflow"),
            (self.underflow, "underflow"),
            (self.invalid, "invalid"),
            (self.inexact, "inexact"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|&(_, n)| n)
        .collect();
        if names.is_empty() {
            f.write_str("-")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacResult {
    pub bits: PackedWord,
    pub lanes: usize,
    /// Indexed by lane; only the first `lanes` entries are meaningful.
    pub flags: [Flags; 2],
}

impl MacResult {
    pub fn lane_bits(&self, lane: usize) -> u8 {
        self.bits.lane(lane)
    }
}

/// Result of special-value resolution, fixed before any arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Special {
    NaN,
    Inf { negative: bool },
}

fn resolve_special(a: &DecodedFloat, b: &DecodedFloat, c: &DecodedFloat) -> Option<Special> {
    use FloatClass::*;
    if [a, b, c].iter().any(|v| v.class == NaN) {
        return Some(Special::NaN);
    }
    let p_neg = a.negative ^ b.negative;
    let p_inf = a.class == Inf || b.class == Inf;
    let p_zero = a.class == Zero || b.class == Zero;
    if p_inf {
        if p_zero || (c.class == Inf && c.negative != p_neg) {
            return Some(Special::NaN);
        }
        return Some(Special::Inf { negative: p_neg });
    }
    if c.class == Inf {
        return Some(Special::Inf {
            negative: c.negative,
        });
    }
    None
}

// ---------------------------------------------------------------- S0

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneOperands {
    pub a: DecodedFloat,
    pub b: DecodedFloat,
    pub c: DecodedFloat,
    pub special: Option<Special>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct S0Decoded {
    pub lanes: [LaneOperands; 2],
    pub count: usize,
}

pub fn stage0_decode(a: PackedWord, b: PackedWord, c: PackedWord, cfg: &MacConfig) -> S0Decoded {
    let spec = cfg.spec();
    let count = cfg.mode.lanes();
    let lane = |i: usize| {
        let (a, b, c) = (
            decode(cfg.mode.word(a.bits).lane(i), spec),
            decode(cfg.mode.word(b.bits).lane(i), spec),
            decode(cfg.mode.word(c.bits).lane(i), spec),
        );
        LaneOperands {
            a,
            b,
            c,
            special: resolve_special(&a, &b, &c),
        }
    };
    let first = lane(0);
    let second = if count == 2 { lane(1) } else { first };
    S0Decoded {
        lanes: [first, second],
        count,
    }
}

// ---------------------------------------------------------------- S1

/// A signed fixed-point term: `(-1)^negative * significand * 2^(exp - frac_bits)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub negative: bool,
    pub significand: u64,
    pub exp: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultipliedLane {
    /// Product significand with `2m` fraction bits.
    pub product: Term,
    /// Addend significand with `m` fraction bits.
    pub addend: Term,
    pub cmp: ExpCompareResult,
    /// Result sign if the exact sum is zero.
    pub zero_sign: bool,
    pub special: Option<Special>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct S1Multiplied {
    pub lanes: [MultipliedLane; 2],
    pub count: usize,
    /// Raw outputs of the (up to two) unit multiplier blocks.
    pub multiplier_outputs: [u8; 2],
}

/// Significand products for every lane, routed through the unit multiplier.
///
/// Single FP8 modes use one block in full mode. Dual E2M1 packs both 2-bit
/// significands into one block in split mode. Dual E1M2 significands are
/// 3 bits, so each lane takes its own block in full mode.
fn multiply_significands(d: &S0Decoded, mode: MacMode) -> ([u32; 2], [u8; 2]) {
    let sig =
        |lane: usize, op: fn(&LaneOperands) -> &DecodedFloat| op(&d.lanes[lane]).significand as u8;
    let a = |l: usize| sig(l, |o| &o.a);
    let b = |l: usize| sig(l, |o| &o.b);
    match mode {
        MacMode::E4M3 | MacMode::E5M2 => {
            let p = unit_multiply(a(0), b(0), MulMode::Full);
            ([u32::from(p); 2], [p, 0])
        }
        MacMode::DualE2M1 => {
            let p = unit_multiply((a(1) << 2) | a(0), (b(1) << 2) | b(0), MulMode::Split);
            ([u32::from(p & 0x0F), u32::from(p >> 4)], [p, 0])
        }
        MacMode::DualE1M2 => {
            let p0 = unit_multiply(a(0), b(0), MulMode::Full);
            let p1 = unit_multiply(a(1), b(1), MulMode::Full);
            ([u32::from(p0), u32::from(p1)], [p0, p1])
        }
    }
}

pub fn stage1_multiply(d: &S0Decoded, cfg: &MacConfig, cmp: &ExponentComparator) -> S1Multiplied {
    let (products, blocks) = multiply_significands(d, cfg.mode);
    let lane = |i: usize| {
        let ops = &d.lanes[i];
        let p_neg = ops.a.negative ^ ops.b.negative;
        let p_zero = ops.a.is_zero() || ops.b.is_zero();
        let c_zero = ops.c.is_zero();
        let mut e_p = product_exponent(ops.a.exp, ops.b.exp);
        let mut e_c = ops.c.exp;
        // A zero term must not pull the other one out of place.
        if p_zero {
            e_p = e_c;
        } else if c_zero {
            e_c = e_p;
        }
        MultipliedLane {
            product: Term {
                negative: p_neg,
                significand: u64::from(products[i]),
                exp: e_p,
            },
            addend: Term {
                negative: ops.c.negative,
                significand: u64::from(ops.c.significand),
                exp: e_c,
            },
            cmp: cmp.compare_align(e_p, e_c),
            zero_sign: p_zero && c_zero && p_neg && ops.c.negative,
            special: ops.special,
        }
    };
    let first = lane(0);
    let second = if d.count == 2 { lane(1) } else { first };
    S1Multiplied {
        lanes: [first, second],
        count: d.count,
        multiplier_outputs: blocks,
    }
}

// ---------------------------------------------------------------- S2

/// A term after alignment, held as a W-bit two's-complement value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedTerm {
    /// Sign-extended two's-complement value.
    pub value: i128,
    pub negative: bool,
    /// Some nonzero bit was shifted out.
    pub sticky: bool,
}

impl AlignedTerm {
    /// W-bit one's-complement pattern; the missing `+1` goes to the CSA as a
    /// separate correction input.
    pub fn ones_complement_bits(&self, width: u32) -> u128 {
        (self.value - i128::from(self.negative)) as u128 & mask(width)
    }
}

pub(crate) const fn mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

pub(crate) const fn sign_extend(bits: u128, width: u32) -> i128 {
    let unused = 128 - width;
    ((bits << unused) as i128) >> unused
}

/// Right-shifts a magnitude with truncation, then complements it if negative.
pub fn align_one(magnitude: u128, negative: bool, shift: u32, width: u32) -> AlignedTerm {
    debug_assert!(
        magnitude < 1 << (width - 1),
        "magnitude exceeds accumulator headroom"
    );
    let (kept, sticky) = if shift >= width {
        (0, magnitude != 0)
    } else {
        (magnitude >> shift, magnitude & mask(shift) != 0)
    };
    let value = if negative {
        -(kept as i128)
    } else {
        kept as i128
    };
    AlignedTerm {
        value,
        negative,
        sticky,
    }
}

/// Places product and addend on the common fixed-point grid and aligns the
/// one with the smaller exponent.
pub fn align_terms(
    p: &Term,
    c: &Term,
    cmp: &ExpCompareResult,
    cfg: &MacConfig,
) -> (AlignedTerm, AlignedTerm) {
    let width = cfg.width();
    let g = cfg.guard_bits;
    let m = cfg.spec().man_bits;
    let p_mag = u128::from(p.significand) << g;
    let c_mag = u128::from(c.significand) << (g + m);
    (
        align_one(p_mag, p.negative, cmp.shift_p, width),
        align_one(c_mag, c.negative, cmp.shift_c, width),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignedLane {
    pub product: AlignedTerm,
    pub addend: AlignedTerm,
    pub e_ref: i32,
    pub zero_sign: bool,
    pub special: Option<Special>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct S2Aligned {
    pub lanes: [AlignedLane; 2],
    pub count: usize,
}

pub fn stage2_align(s: &S1Multiplied, cfg: &MacConfig) -> S2Aligned {
    let lane = |l: &MultipliedLane| {
        let (product, addend) = align_terms(&l.product, &l.addend, &l.cmp, cfg);
        AlignedLane {
            product,
            addend,
            e_ref: l.cmp.e_ref,
            zero_sign: l.zero_sign,
            special: l.special,
        }
    };
    S2Aligned {
        lanes: [lane(&s.lanes[0]), lane(&s.lanes[1])],
        count: s.count,
    }
}

// ---------------------------------------------------------------- S3

/// 3:2 carry-save compression of three W-bit vectors.
///
/// `sum + carry == x + y + z (mod 2^W)`.
pub fn csa_3to2(x: u128, y: u128, z: u128, width: u32) -> (u128, u128) {
    let m = mask(width);
    let (x, y, z) = (x & m, y & m, z & m);
    let sum = x ^ y ^ z;
    let majority = (x & y) | (x & z) | (y & z);
    (sum, (majority << 1) & m)
}

/// Selection made by one carry-select block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSelect {
    pub index: u32,
    pub sum_cin0: u128,
    pub sum_cin1: u128,
    pub carry_in: bool,
    pub carry_out: bool,
}

fn carry_select(
    s: u128,
    k: u128,
    width: u32,
    block: u32,
    mut observe: impl FnMut(BlockSelect),
) -> u128 {
    assert!(block > 0 && block < 64);
    let m = mask(width);
    let (s, k) = (s & m, k & m);
    let block_mask = (1u128 << block) - 1;
    let mut result = 0u128;
    let mut carry = false;
    let mut lo = 0;
    let mut index = 0;
    while lo < width {
        let sb = (s >> lo) & block_mask;
        let kb = (k >> lo) & block_mask;
        // both candidates exist before the incoming carry is known
        let sum0 = sb + kb;
        let sum1 = sb + kb + 1;
        let chosen = if carry { sum1 } else { sum0 };
        let carry_out = chosen >> block != 0;
        observe(BlockSelect {
            index,
            sum_cin0: sum0 & block_mask,
            sum_cin1: sum1 & block_mask,
            carry_in: carry,
            carry_out,
        });
        result |= (chosen & block_mask) << lo;
        carry = carry_out;
        lo += block;
        index += 1;
    }
    result & m
}

/// Carry-select addition in `block`-bit blocks, recording each selection.
pub fn carry_select_add_traced(
    s: u128,
    k: u128,
    width: u32,
    block: u32,
) -> (u128, Vec<BlockSelect>) {
    let mut trace = Vec::with_capacity(width.div_ceil(block) as usize);
    let sum = carry_select(s, k, width, block, |b| trace.push(b));
    (sum, trace)
}

/// Carry-select addition, `s + k mod 2^W`, in [`CSLA_BLOCK`]-bit blocks.
pub fn carry_select_add(s: u128, k: u128, width: u32) -> u128 {
    carry_select(s, k, width, CSLA_BLOCK, |_| ())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccumulatedLane {
    /// Sign-extended accumulator.
    pub acc: i128,
    pub e_ref: i32,
    pub sticky: bool,
    pub zero_sign: bool,
    pub special: Option<Special>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct S3Accumulated {
    pub lanes: [AccumulatedLane; 2],
    pub count: usize,
}

/// Sums the aligned terms of one lane through CSA and CSLA.
pub fn accumulate(p: &AlignedTerm, c: &AlignedTerm, width: u32) -> i128 {
    let correction = u128::from(p.negative) + u128::from(c.negative);
    let (sum, carry) = csa_3to2(
        p.ones_complement_bits(width),
        c.ones_complement_bits(width),
        correction,
        width,
    );
    sign_extend(carry_select_add(sum, carry, width), width)
}

pub fn stage3_accumulate(s: &S2Aligned, cfg: &MacConfig) -> S3Accumulated {
    let width = cfg.width();
    let lane = |l: &AlignedLane| AccumulatedLane {
        acc: accumulate(&l.product, &l.addend, width),
        e_ref: l.e_ref,
        sticky: l.product.sticky || l.addend.sticky,
        zero_sign: l.zero_sign,
        special: l.special,
    };
    S3Accumulated {
        lanes: [lane(&s.lanes[0]), lane(&s.lanes[1])],
        count: s.count,
    }
}

// ---------------------------------------------------------------- S4

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Normalized {
    pub value: DecodedFloat,
    /// Nonzero bits dropped while truncating to the format.
    pub truncated: bool,
    /// Exponent fell below the normal range.
    pub tiny: bool,
}

/// Leading-zero normalization of a two's-complement accumulator.
///
/// The accumulator's bit `2m + guard_bits` carries weight `2^e_ref`. The
/// magnitude is shifted so its leading one sits at the hidden-bit position,
/// low bits are truncated, and results below `emin` are denormalized.
/// A zero accumulator returns `+0`.
pub fn normalize(acc: i128, e_ref: i32, cfg: &MacConfig) -> Normalized {
    let spec = cfg.spec();
    let width = cfg.width();
    let m = spec.man_bits;
    if acc == 0 {
        return Normalized {
            value: DecodedFloat::zero(false, spec),
            truncated: false,
            tiny: false,
        };
    }
    let negative = acc < 0;
    let mag = acc.unsigned_abs();
    let lz = mag.leading_zeros() - (128 - width);
    let msb = width - 1 - lz;
    let exp = e_ref + msb as i32 - cfg.binary_point() as i32;

    if exp >= spec.emin() {
        let (sig, dropped) = if msb >= m {
            let sh = msb - m;
            (mag >> sh, mag & mask(sh))
        } else {
            (mag << (m - msb), 0)
        };
        let value = DecodedFloat {
            negative,
            exp,
            significand: sig as u32,
            class: FloatClass::Normal,
        };
        return Normalized {
            value,
            truncated: dropped != 0,
            tiny: false,
        };
    }

    // Subnormal grid: LSB weight 2^(emin - m); accumulator LSB weight
    // 2^(e_ref - point).
    let shift = (spec.emin() - m as i32) - (e_ref - cfg.binary_point() as i32);
    let (sig, dropped) = if shift >= 128 {
        (0, mag)
    } else if shift >= 0 {
        (mag >> shift, mag & mask(shift as u32))
    } else {
        (mag << shift.unsigned_abs(), 0)
    };
    let value = if sig == 0 {
        DecodedFloat::zero(negative, spec)
    } else {
        DecodedFloat {
            negative,
            exp: spec.emin(),
            significand: sig as u32,
            class: FloatClass::Subnormal,
        }
    };
    Normalized {
        value,
        truncated: dropped != 0,
        tiny: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalizedLane {
    pub value: DecodedFloat,
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct S4Normalized {
    pub lanes: [NormalizedLane; 2],
    pub count: usize,
}

pub fn stage4_normalize(s: &S3Accumulated, cfg: &MacConfig) -> S4Normalized {
    let spec = cfg.spec();
    let lane = |l: &AccumulatedLane| match l.special {
        Some(Special::NaN) => NormalizedLane {
            value: DecodedFloat::nan(),
            flags: Flags {
                invalid: true,
                ..Flags::default()
            },
        },
        Some(Special::Inf { negative }) => NormalizedLane {
            value: DecodedFloat::infinity(negative),
            flags: Flags::default(),
        },
        None if l.acc == 0 => NormalizedLane {
            value: DecodedFloat::zero(l.zero_sign, spec),
            flags: Flags {
                inexact: l.sticky,
                ..Flags::default()
            },
        },
        None => {
            let n = normalize(l.acc, l.e_ref, cfg);
            let inexact = l.sticky || n.truncated;
            NormalizedLane {
                value: n.value,
                flags: Flags {
                    inexact,
                    underflow: n.tiny && inexact,
                    ..Flags::default()
                },
            }
        }
    };
    S4Normalized {
        lanes: [lane(&s.lanes[0]), lane(&s.lanes[1])],
        count: s.count,
    }
}

// ---------------------------------------------------------------- S5

/// Clamps negative values (including -0 and -Inf) to +0; NaN passes.
pub fn relu(v: DecodedFloat) -> DecodedFloat {
    if v.negative && v.class != FloatClass::NaN {
        DecodedFloat {
            negative: false,
            exp: v.exp,
            significand: 0,
            class: FloatClass::Zero,
        }
    } else {
        v
    }
}

pub fn stage5_output(s: &S4Normalized, cfg: &MacConfig) -> MacResult {
    let spec = cfg.spec();
    let lane = |l: &NormalizedLane| {
        let v = if cfg.relu { relu(l.value) } else { l.value };
        let e = encode(&v, spec);
        let flags = Flags {
            overflow: l.flags.overflow || e.overflow,
            underflow: l.flags.underflow,
            invalid: l.flags.invalid || e.invalid,
            inexact: l.flags.inexact || e.overflow,
        };
        (e.bits, flags)
    };
    let (b0, f0) = lane(&s.lanes[0]);
    let (bits, flags) = if s.count == 2 {
        let (b1, f1) = lane(&s.lanes[1]);
        ((b1 << 4) | b0, [f0, f1])
    } else {
        (b0, [f0, Flags::default()])
    };
    MacResult {
        bits: cfg.mode.word(bits),
        lanes: s.count,
        flags,
    }
}

// ---------------------------------------------------------------- one-shot

/// Every stage latch of one evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageTrace {
    pub s0: S0Decoded,
    pub s1: S1Multiplied,
    pub s2: S2Aligned,
    pub s3: S3Accumulated,
    pub s4: S4Normalized,
    pub s5: MacResult,
}

/// A configured datapath with its comparator table built once.
#[derive(Debug, Clone)]
pub struct Datapath {
    cfg: MacConfig,
    cmp: ExponentComparator,
}

impl Datapath {
    pub fn new(cfg: MacConfig) -> Self {
        Datapath {
            cmp: ExponentComparator::new(cfg.width()),
            cfg,
        }
    }

    pub fn config(&self) -> &MacConfig {
        &self.cfg
    }

    pub fn comparator(&self) -> &ExponentComparator {
        &self.cmp
    }

    pub fn mac(&self, a: PackedWord, b: PackedWord, c: PackedWord) -> MacResult {
        let cfg = &self.cfg;
        let s0 = stage0_decode(a, b, c, cfg);
        let s1 = stage1_multiply(&s0, cfg, &self.cmp);
        let s2 = stage2_align(&s1, cfg);
        let s3 = stage3_accumulate(&s2, cfg);
        let s4 = stage4_normalize(&s3, cfg);
        stage5_output(&s4, cfg)
    }

    /// Same as [`Datapath::mac`] on raw operand bytes.
    pub fn mac_bits(&self, a: u8, b: u8, c: u8) -> MacResult {
        let w = |x| self.cfg.mode.word(x);
        self.mac(w(a), w(b), w(c))
    }

    pub fn mac_traced(&self, a: PackedWord, b: PackedWord, c: PackedWord) -> StageTrace {
        let cfg = &self.cfg;
        let s0 = stage0_decode(a, b, c, cfg);
        let s1 = stage1_multiply(&s0, cfg, &self.cmp);
        let s2 = stage2_align(&s1, cfg);
        let s3 = stage3_accumulate(&s2, cfg);
        let s4 = stage4_normalize(&s3, cfg);
        let s5 = stage5_output(&s4, cfg);
        StageTrace {
            s0,
            s1,
            s2,
            s3,
            s4,
            s5,
        }
    }
}

/// One-shot multiply-accumulate `a * b + c` per lane.
pub fn mac(a: PackedWord, b: PackedWord, c: PackedWord, cfg: &MacConfig) -> MacResult {
    Datapath::new(*cfg).mac(a, b, c)
}
