//! Bit-accurate software model of a dual-precision floating-point
//! multiply-accumulate processing element.
//!
//! The PE accepts 8-bit operand words that carry either one FP8 value
//! (E4M3 or E5M2) or two FP4 lane values (E2M1 or E1M2), and evaluates
//! `a * b + c` through a six-stage datapath: decode, multiply and exponent
//! compare, truncating alignment, carry-save accumulation, leading-zero
//! normalization, and encode with an optional ReLU.
//!
//! The crate exposes the stages individually, a one-shot [`mac`] entry
//! point, a cycle-level [`pipeline::Pipeline`], and an exact-arithmetic
//! [`oracle`] used to verify the datapath.

pub mod cli;
pub mod datapath;
pub mod error;
pub mod exponent_cmp;
pub mod formats;
pub mod oracle;
pub mod pipeline;
pub mod scalar;
pub mod unit_mult;

pub use datapath::{mac, Flags, MacConfig, MacMode, MacResult};
pub use error::{Error, Result};
pub use exponent_cmp::{ExpCompareResult, ExponentComparator};
pub use formats::{decode, encode, DecodedFloat, FloatClass, Format, FormatSpec, PackedWord};
pub use oracle::{ErrorStats, ExactValue};
pub use pipeline::{Pipeline, ThroughputReport};
pub use scalar::{Scalar, ValueRow};
pub use unit_mult::{masked_ppsum, unit_multiply, MulMode};

/// Arbitrary-precision rational, the exact scalar used by the oracle.
pub type Rational = num_rational::BigRational;

/// Decoded value table of a format, one row per bit pattern.
pub type ValueTable<T> = Vec<ValueRow<T>>;
/// Value table rendered in double precision.
pub type ValueTableF64 = ValueTable<f64>;
/// Value table rendered in single precision.
pub type ValueTableF32 = ValueTable<f32>;
/// Value table rendered exactly.
pub type ValueTableExact = ValueTable<Rational>;
