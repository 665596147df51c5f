//! Exact reference arithmetic and error statistics.
//!
//! Values are `±numerator * 2^exp2` with an unbounded numerator, so products
//! and sums of decoded operands are computed without any loss. Quantization
//! searches the sorted table of representable magnitudes instead of
//! re-deriving exponent and mantissa fields, which keeps it independent of
//! the datapath's normalizer.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datapath::{Datapath, MacConfig};
use crate::error::{Error, Result};
use crate::formats::{decode, DecodedFloat, FloatClass, Format, FormatSpec};
use crate::scalar::Scalar;

/// Schema version written into every serialized report.
pub const REPORT_VERSION: u32 = 1;

/// Largest exhaustive sweep accepted, in operand triples.
pub const EXHAUSTIVE_LIMIT: u64 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExactClass {
    Zero,
    Finite,
    Inf,
    NaN,
}

/// An exact value `(-1)^negative * numerator * 2^exp2`.
///
/// Canonical: the numerator is odd, or zero with `exp2 == 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactValue {
    pub negative: bool,
    pub numerator: BigUint,
    pub exp2: i64,
    pub class: ExactClass,
}

impl ExactValue {
    pub fn zero(negative: bool) -> Self {
        ExactValue {
            negative,
            numerator: BigUint::zero(),
            exp2: 0,
            class: ExactClass::Zero,
        }
    }

    pub fn nan() -> Self {
        ExactValue {
            negative: false,
            numerator: BigUint::zero(),
            exp2: 0,
            class: ExactClass::NaN,
        }
    }

    pub fn infinity(negative: bool) -> Self {
        ExactValue {
            negative,
            numerator: BigUint::zero(),
            exp2: 0,
            class: ExactClass::Inf,
        }
    }

    pub fn finite(negative: bool, numerator: BigUint, exp2: i64) -> Self {
        if numerator.is_zero() {
            return Self::zero(negative);
        }
        let tz = numerator.trailing_zeros().unwrap_or(0);
        ExactValue {
            negative,
            numerator: numerator >> tz,
            exp2: exp2 + tz as i64,
            class: ExactClass::Finite,
        }
    }

    pub fn from_decoded(d: &DecodedFloat, spec: &FormatSpec) -> Self {
        match d.class {
            FloatClass::NaN => Self::nan(),
            FloatClass::Inf => Self::infinity(d.negative),
            FloatClass::Zero => Self::zero(d.negative),
            FloatClass::Normal | FloatClass::Subnormal => Self::finite(
                d.negative,
                BigUint::from(d.significand),
                i64::from(d.exp) - i64::from(spec.man_bits),
            ),
        }
    }

    pub fn is_nan(&self) -> bool {
        self.class == ExactClass::NaN
    }

    pub fn mul(&self, other: &ExactValue) -> ExactValue {
        use ExactClass::*;
        let negative = self.negative ^ other.negative;
        match (self.class, other.class) {
            (NaN, _) | (_, NaN) => Self::nan(),
            (Inf, Zero) | (Zero, Inf) => Self::nan(),
            (Inf, _) | (_, Inf) => Self::infinity(negative),
            (Zero, _) | (_, Zero) => Self::zero(negative),
            (Finite, Finite) => Self::finite(
                negative,
                &self.numerator * &other.numerator,
                self.exp2 + other.exp2,
            ),
        }
    }

    fn signed_numerator(&self) -> BigInt {
        let n = BigInt::from_biguint(Sign::Plus, self.numerator.clone());
        if self.negative {
            -n
        } else {
            n
        }
    }

    pub fn add(&self, other: &ExactValue) -> ExactValue {
        use ExactClass::*;
        match (self.class, other.class) {
            (NaN, _) | (_, NaN) => Self::nan(),
            (Inf, Inf) if self.negative != other.negative => Self::nan(),
            (Inf, _) => self.clone(),
            (_, Inf) => other.clone(),
            (Zero, Zero) => Self::zero(self.negative && other.negative),
            (Zero, Finite) => other.clone(),
            (Finite, Zero) => self.clone(),
            (Finite, Finite) => {
                let e = self.exp2.min(other.exp2);
                let x = self.signed_numerator() << (self.exp2 - e) as usize;
                let y = other.signed_numerator() << (other.exp2 - e) as usize;
                let s = x + y;
                if s.is_zero() {
                    Self::zero(false)
                } else {
                    Self::finite(s.is_negative(), s.magnitude().clone(), e)
                }
            }
        }
    }

    pub fn to_rational(&self) -> Option<BigRational> {
        match self.class {
            ExactClass::Zero => Some(BigRational::zero()),
            ExactClass::Finite => {
                let n = self.signed_numerator();
                let one = BigInt::from(1);
                Some(if self.exp2 >= 0 {
                    BigRational::from_integer(n << self.exp2 as usize)
                } else {
                    BigRational::new(n, one << (-self.exp2) as usize)
                })
            }
            _ => None,
        }
    }

    /// Renders into a host scalar; `None` if the numerator is too wide or the
    /// host lacks the class.
    pub fn to_scalar<T: Scalar>(&self) -> Option<T> {
        match self.class {
            ExactClass::NaN => T::nan(),
            ExactClass::Inf => T::infinity(self.negative),
            ExactClass::Zero => Some(T::from_scaled(self.negative, 0, 0)),
            ExactClass::Finite => {
                let n = self.numerator.to_u128()?;
                Some(T::from_scaled(
                    self.negative,
                    n,
                    i32::try_from(self.exp2).ok()?,
                ))
            }
        }
    }
}

/// `a * b + c` computed exactly.
pub fn exact_mac(
    a: &DecodedFloat,
    b: &DecodedFloat,
    c: &DecodedFloat,
    spec: &FormatSpec,
) -> ExactValue {
    let x = |d| ExactValue::from_decoded(d, spec);
    x(a).mul(&x(b)).add(&x(c))
}

/// `sum a_i * b_i` computed exactly, starting from `+0`.
pub fn exact_dot<'a>(
    pairs: impl IntoIterator<Item = (&'a DecodedFloat, &'a DecodedFloat)>,
    spec: &FormatSpec,
) -> ExactValue {
    pairs
        .into_iter()
        .fold(ExactValue::zero(false), |acc, (a, b)| {
            acc.add(&ExactValue::from_decoded(a, spec).mul(&ExactValue::from_decoded(b, spec)))
        })
}

/// Compares `|x|` with `|y|` for finite or zero values.
fn cmp_magnitude(x: &ExactValue, y: &ExactValue) -> Ordering {
    match (x.numerator.is_zero(), y.numerator.is_zero()) {
        (true, true) => return Ordering::Equal,
        (true, false) => return Ordering::Less,
        (false, true) => return Ordering::Greater,
        _ => {}
    }
    let lead_x = x.numerator.bits() as i64 + x.exp2;
    let lead_y = y.numerator.bits() as i64 + y.exp2;
    if lead_x != lead_y {
        return lead_x.cmp(&lead_y);
    }
    if x.exp2 >= y.exp2 {
        (&x.numerator << (x.exp2 - y.exp2) as usize).cmp(&y.numerator)
    } else {
        x.numerator
            .cmp(&(&y.numerator << (y.exp2 - x.exp2) as usize))
    }
}

/// Truncating quantizer for one format.
#[derive(Debug, Clone)]
pub struct Quantizer {
    spec: &'static FormatSpec,
    /// Non-negative finite patterns sorted by value.
    magnitudes: Vec<(u8, ExactValue)>,
    /// Magnitudes at or above this overflow to Inf (formats with Inf only).
    inf_threshold: Option<ExactValue>,
}

impl Quantizer {
    pub fn new(format: Format) -> Self {
        let spec = format.spec();
        let mut magnitudes: Vec<(u8, ExactValue)> = spec
            .patterns()
            .filter(|p| p & spec.sign_mask() == 0)
            .filter_map(|p| {
                let d = decode(p, spec);
                d.class
                    .is_finite()
                    .then(|| (p, ExactValue::from_decoded(&d, spec)))
            })
            .collect();
        magnitudes.sort_by(|a, b| cmp_magnitude(&a.1, &b.1));
        let inf_threshold = spec
            .has_infinity
            .then(|| ExactValue::finite(false, BigUint::from(1u8), i64::from(spec.emax()) + 1));
        Quantizer {
            spec,
            magnitudes,
            inf_threshold,
        }
    }

    pub fn spec(&self) -> &'static FormatSpec {
        self.spec
    }

    /// Largest representable magnitude not exceeding `|v|`, with `v`'s sign.
    pub fn quantize_truncate(&self, v: &ExactValue) -> u8 {
        let spec = self.spec;
        let sign = if v.negative { spec.sign_mask() } else { 0 };
        match v.class {
            ExactClass::NaN => spec.canonical_nan().unwrap_or(spec.max_finite()),
            ExactClass::Inf => spec
                .infinity(v.negative)
                .unwrap_or(sign | spec.max_finite()),
            ExactClass::Zero => sign,
            ExactClass::Finite => {
                if let Some(t) = &self.inf_threshold {
                    if cmp_magnitude(v, t) != Ordering::Less {
                        return spec.infinity(v.negative).expect("threshold implies Inf");
                    }
                }
                // first entry strictly greater than |v|
                let idx = self
                    .magnitudes
                    .partition_point(|(_, m)| cmp_magnitude(m, v) != Ordering::Greater);
                let (bits, _) = &self.magnitudes[idx.max(1) - 1];
                sign | bits
            }
        }
    }
}

pub fn quantize_truncate(v: &ExactValue, format: Format) -> u8 {
    Quantizer::new(format).quantize_truncate(v)
}

/// Oracle counterpart of the ReLU stage applied to an encoded pattern.
pub fn relu_pattern(bits: u8, spec: &FormatSpec) -> u8 {
    if bits & spec.sign_mask() != 0 && !spec.is_nan(bits) {
        0
    } else {
        bits
    }
}

/// Signed position of a pattern in value order (both zeros map to 0).
fn ordinal(bits: u8, spec: &FormatSpec) -> i64 {
    let mag = i64::from(bits & !spec.sign_mask() & spec.mask());
    if bits & spec.sign_mask() != 0 {
        -mag
    } else {
        mag
    }
}

/// Distance in representable steps between two patterns. `None` when
/// exactly one side is NaN; two NaNs are at distance 0.
pub fn ulp_distance(x: u8, y: u8, spec: &FormatSpec) -> Option<u64> {
    match (spec.is_nan(x), spec.is_nan(y)) {
        (true, true) => Some(0),
        (false, false) => Some(ordinal(x, spec).abs_diff(ordinal(y, spec))),
        _ => None,
    }
}

mod rational_str {
    use num_rational::BigRational;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Accumulated comparison of PE results against the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub version: u32,
    /// Lane results compared.
    pub samples: u64,
    pub max_ulp: u64,
    pub mismatch_count: u64,
    /// Results where exactly one side was NaN.
    pub special_mismatch: u64,
    /// Sum of `|pe - oracle|` over finite results, exact.
    #[serde(with = "rational_str")]
    pub sum_abs: BigRational,
    pub histogram: BTreeMap<u64, u64>,
}

impl Default for ErrorStats {
    fn default() -> Self {
        ErrorStats {
            version: REPORT_VERSION,
            samples: 0,
            max_ulp: 0,
            mismatch_count: 0,
            special_mismatch: 0,
            sum_abs: BigRational::zero(),
            histogram: BTreeMap::new(),
        }
    }
}

impl ErrorStats {
    pub fn mean_abs(&self) -> BigRational {
        if self.samples == 0 {
            BigRational::zero()
        } else {
            &self.sum_abs / BigRational::from_integer(self.samples.into())
        }
    }

    /// Records one lane comparison of encoded results.
    pub fn record(&mut self, pe: u8, oracle: u8, spec: &FormatSpec) {
        self.samples += 1;
        match ulp_distance(pe, oracle, spec) {
            None => self.special_mismatch += 1,
            Some(d) => {
                *self.histogram.entry(d).or_insert(0) += 1;
                if d > 0 {
                    self.mismatch_count += 1;
                    self.max_ulp = self.max_ulp.max(d);
                    let v = |p| decode(p, spec).value::<BigRational>(spec);
                    if let (Some(x), Some(y)) = (v(pe), v(oracle)) {
                        self.sum_abs += (x - y).abs();
                    }
                }
            }
        }
    }

    pub fn merge(mut self, other: ErrorStats) -> ErrorStats {
        self.samples += other.samples;
        self.max_ulp = self.max_ulp.max(other.max_ulp);
        self.mismatch_count += other.mismatch_count;
        self.special_mismatch += other.special_mismatch;
        self.sum_abs += other.sum_abs;
        for (k, v) in other.histogram {
            *self.histogram.entry(k).or_insert(0) += v;
        }
        self
    }

    /// Worst-case ULP, treating a NaN disagreement as unbounded.
    pub fn worst_ulp(&self) -> u64 {
        if self.special_mismatch > 0 {
            u64::MAX
        } else {
            self.max_ulp
        }
    }
}

/// Input space for a sweep. Dual-lane modes sweep per-lane triples: lane 1
/// takes each triple in order and lane 0 a fixed permutation of the same set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SweepDomain {
    /// Every `(a, b, c)` triple.
    Exhaustive,
    /// Every `(a, b)` pair with a `+0` addend.
    ProductPairs,
    /// Uniformly random words.
    Random {
        count: u64,
        seed: u64,
    },
    Triples(Vec<(u8, u8, u8)>),
}

fn lane_space(cfg: &MacConfig) -> u64 {
    1 << cfg.spec().total_bits
}

impl SweepDomain {
    pub fn len(&self, cfg: &MacConfig) -> u64 {
        let n = lane_space(cfg);
        match self {
            SweepDomain::Exhaustive => n * n * n,
            SweepDomain::ProductPairs => n * n,
            SweepDomain::Random { count, .. } => *count,
            SweepDomain::Triples(t) => t.len() as u64,
        }
    }

    pub fn is_empty(&self, cfg: &MacConfig) -> bool {
        self.len(cfg) == 0
    }

    pub fn check_size(&self, cfg: &MacConfig) -> Result<()> {
        let size = self.len(cfg);
        if matches!(self, SweepDomain::Exhaustive) && size > EXHAUSTIVE_LIMIT {
            return Err(Error::DomainTooLarge {
                size,
                limit: EXHAUSTIVE_LIMIT,
            });
        }
        Ok(())
    }
}

/// Operand words for the `i`-th element of an enumerated domain.
fn enumerated_words(i: u64, pairs_only: bool, cfg: &MacConfig) -> (u8, u8, u8) {
    let n = lane_space(cfg);
    let bits = cfg.spec().total_bits;
    let split = |t: u64| -> (u8, u8, u8) {
        if pairs_only {
            ((t / n) as u8, (t % n) as u8, 0)
        } else {
            ((t / (n * n)) as u8, ((t / n) % n) as u8, (t % n) as u8)
        }
    };
    if cfg.mode.lanes() == 1 {
        return split(i);
    }
    let total = if pairs_only { n * n } else { n * n * n };
    // odd multiplier: a bijection of the lane space
    let j = (i * 2731 + 1234) % total;
    let (a1, b1, c1) = split(i);
    let (a0, b0, c0) = split(j);
    ((a1 << bits) | a0, (b1 << bits) | b0, (c1 << bits) | c0)
}

/// Per-lane oracle result for one operand triple, including the ReLU rule.
pub fn oracle_lanes(a: u8, b: u8, c: u8, cfg: &MacConfig, q: &Quantizer) -> [u8; 2] {
    let spec = cfg.spec();
    let mut out = [0u8; 2];
    for (lane, slot) in out.iter_mut().enumerate().take(cfg.mode.lanes()) {
        let w = |x| cfg.mode.word(x).lane(lane);
        let exact = exact_mac(
            &decode(w(a), spec),
            &decode(w(b), spec),
            &decode(w(c), spec),
            spec,
        );
        let bits = q.quantize_truncate(&exact);
        *slot = if cfg.relu {
            relu_pattern(bits, spec)
        } else {
            bits
        };
    }
    out
}

fn compare_one(dp: &Datapath, q: &Quantizer, (a, b, c): (u8, u8, u8), stats: &mut ErrorStats) {
    let cfg = dp.config();
    let pe = dp.mac_bits(a, b, c);
    let expected = oracle_lanes(a, b, c, cfg, q);
    for (lane, &want) in expected.iter().enumerate().take(cfg.mode.lanes()) {
        stats.record(pe.lane_bits(lane), want, cfg.spec());
    }
}

/// Random operand triples from a seeded generator.
pub fn random_triples(count: u64, seed: u64) -> Vec<(u8, u8, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (rng.random(), rng.random(), rng.random()))
        .collect()
}

/// Runs the PE and the oracle over a domain and accumulates the differences.
///
/// Work is split across the current rayon pool; the merged statistics do not
/// depend on the split.
pub fn compare_sweep(cfg: &MacConfig, domain: &SweepDomain) -> ErrorStats {
    let dp = Datapath::new(*cfg);
    let q = Quantizer::new(cfg.mode.format());
    let fold = |items: &mut dyn Iterator<Item = (u8, u8, u8)>| {
        let mut stats = ErrorStats::default();
        for t in items {
            compare_one(&dp, &q, t, &mut stats);
        }
        stats
    };
    const CHUNK: u64 = 1 << 14;
    let chunked = |len: u64, item: &(dyn Fn(u64) -> (u8, u8, u8) + Sync)| {
        (0..len.div_ceil(CHUNK))
            .into_par_iter()
            .map(|k| {
                let lo = k * CHUNK;
                let hi = (lo + CHUNK).min(len);
                fold(&mut (lo..hi).map(item))
            })
            .reduce(ErrorStats::default, ErrorStats::merge)
    };
    match domain {
        SweepDomain::Exhaustive => chunked(domain.len(cfg), &|i| enumerated_words(i, false, cfg)),
        SweepDomain::ProductPairs => chunked(domain.len(cfg), &|i| enumerated_words(i, true, cfg)),
        SweepDomain::Random { count, seed } => {
            let triples = random_triples(*count, *seed);
            chunked(triples.len() as u64, &|i| triples[i as usize])
        }
        SweepDomain::Triples(t) => chunked(t.len() as u64, &|i| t[i as usize]),
    }
}
