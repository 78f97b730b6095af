//! Bit-exact software implementations of reduced-precision floating-point
//! formats.
//!
//! Values are carried as `f64` and rounded onto each format's grid of
//! representable numbers; the grids of every supported format (E4M3, E5M2,
//! FP16, BF16, TF32, FP32, FP64) embed exactly in `f64`, so decode is always
//! exact and encode performs a single correct rounding. FP128 is described
//! as metadata only and supports no arithmetic.
//!
//! Two special-value conventions are supported: `IeeeLike` (reserved top
//! exponent for infinities and NaNs) and `E4m3Extended` (no infinities, a
//! single NaN pattern at all-ones exponent and mantissa, maximum finite 448).

use crate::rng::SplitMix64;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("unknown format `{0}` (expected one of: e4m3, e5m2, fp16, bf16, tf32, fp32, fp64, fp128)")]
    UnknownFormat(String),
    #[error("format `{0}` does not support arithmetic")]
    UnsupportedOperation(String),
    #[error("bit pattern {bits:#x} does not fit `{name}` ({width} encoding bits)")]
    PatternTooWide { name: String, bits: u64, width: u32 },
    #[error("operand {value:e} is not representable in `{name}`")]
    NotRepresentable { value: f64, name: String },
    #[error("rounded ops require storage of at most 32 bits, `{0}` has {1}")]
    StorageTooWide(String, u32),
    #[error("invalid format parameters: {0}")]
    InvalidSpec(String),
}

/// Special-value convention of a format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialSemantics {
    /// IEEE 754 style: top exponent field reserved for infinities and NaNs.
    IeeeLike,
    /// Extended-range FP8 E4M3: no infinities, one NaN pattern (all-ones
    /// exponent and mantissa), top exponent otherwise carries finite values.
    E4m3Extended,
}

/// How encode treats values beyond the largest finite number of a format
/// without infinities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverflowPolicy {
    /// Clamp to the signed maximum finite value (common FP8 training practice).
    #[default]
    Saturate,
    /// Produce the canonical NaN.
    ToNan,
}

/// Rounding mode for encode and for emulated scalar arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundingMode {
    NearestEven,
    TowardZero,
    /// Stochastic rounding; the seed fully determines every decision.
    Stochastic { seed: u64 },
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoundingMode::NearestEven => write!(f, "nearest_even"),
            RoundingMode::TowardZero => write!(f, "toward_zero"),
            RoundingMode::Stochastic { seed } => write!(f, "stochastic(seed={seed})"),
        }
    }
}

/// Bit-level description of a floating-point format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatSpec {
    name: String,
    exponent_bits: u32,
    mantissa_bits: u32,
    bias: i32,
    storage_bits: u32,
    special_semantics: SpecialSemantics,
}

impl fmt::Display for FormatSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

impl FormatSpec {
    pub fn new(
        name: &str,
        exponent_bits: u32,
        mantissa_bits: u32,
        bias: i32,
        storage_bits: u32,
        special_semantics: SpecialSemantics,
    ) -> Result<Self, FormatError> {
        if exponent_bits < 2 {
            return Err(FormatError::InvalidSpec(format!(
                "`{name}`: need at least 2 exponent bits, got {exponent_bits}"
            )));
        }
        let layout = 1 + exponent_bits + mantissa_bits;
        if layout > storage_bits {
            return Err(FormatError::InvalidSpec(format!(
                "`{name}`: 1+{exponent_bits}+{mantissa_bits} bits do not fit {storage_bits}-bit storage"
            )));
        }
        if storage_bits <= 64 && mantissa_bits > 52 {
            return Err(FormatError::InvalidSpec(format!(
                "`{name}`: {mantissa_bits} mantissa bits exceed the f64 carrier"
            )));
        }
        Ok(FormatSpec {
            name: name.to_string(),
            exponent_bits,
            mantissa_bits,
            bias,
            storage_bits,
            special_semantics,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn exponent_bits(&self) -> u32 {
        self.exponent_bits
    }
    pub fn mantissa_bits(&self) -> u32 {
        self.mantissa_bits
    }
    pub fn bias(&self) -> i32 {
        self.bias
    }
    pub fn storage_bits(&self) -> u32 {
        self.storage_bits
    }
    pub fn special_semantics(&self) -> SpecialSemantics {
        self.special_semantics
    }

    /// Bits actually used by the encoding: sign + exponent + mantissa.
    /// Equal to `storage_bits` except for TF32 (19 bits in a 32-bit container).
    pub fn layout_bits(&self) -> u32 {
        1 + self.exponent_bits + self.mantissa_bits
    }

    /// Whether values of this format can be carried and operated on in f64.
    pub fn arithmetic_capable(&self) -> bool {
        self.storage_bits <= 64
    }

    /// Default bias `2^(e-1) - 1`.
    pub fn default_bias(exponent_bits: u32) -> i32 {
        (1i32 << (exponent_bits - 1)) - 1
    }

    /// Minimum unbiased exponent of a normal number.
    fn min_exponent(&self) -> i32 {
        1 - self.bias
    }

    /// Maximum unbiased exponent carrying finite values.
    fn max_exponent(&self) -> i32 {
        let top_field = (1i32 << self.exponent_bits) - 1;
        match self.special_semantics {
            SpecialSemantics::IeeeLike => top_field - 1 - self.bias,
            SpecialSemantics::E4m3Extended => top_field - self.bias,
        }
    }

    fn sign_shift(&self) -> u32 {
        self.exponent_bits + self.mantissa_bits
    }

    fn exponent_mask(&self) -> u64 {
        (1u64 << self.exponent_bits) - 1
    }

    fn mantissa_mask(&self) -> u64 {
        (1u64 << self.mantissa_bits) - 1
    }

    fn require_arithmetic(&self) -> Result<(), FormatError> {
        if self.arithmetic_capable() {
            Ok(())
        } else {
            Err(FormatError::UnsupportedOperation(self.name.clone()))
        }
    }
}

/// Name of every built-in format.
pub const BUILTIN_FORMAT_NAMES: [&str; 8] =
    ["e4m3", "e5m2", "fp16", "bf16", "tf32", "fp32", "fp64", "fp128"];

/// Look up a built-in format by name.
pub fn builtin_format(name: &str) -> Result<FormatSpec, FormatError> {
    let lower = name.to_ascii_lowercase();
    let (e, m, storage, semantics) = match lower.as_str() {
        "e4m3" => (4, 3, 8, SpecialSemantics::E4m3Extended),
        "e5m2" => (5, 2, 8, SpecialSemantics::IeeeLike),
        "fp16" => (5, 10, 16, SpecialSemantics::IeeeLike),
        "bf16" => (8, 7, 16, SpecialSemantics::IeeeLike),
        // TF32: 19 significant bits carried in a 32-bit container; the
        // canonical encoding occupies the low 19 bits.
        "tf32" => (8, 10, 32, SpecialSemantics::IeeeLike),
        "fp32" => (8, 23, 32, SpecialSemantics::IeeeLike),
        "fp64" => (11, 52, 64, SpecialSemantics::IeeeLike),
        "fp128" => (15, 112, 128, SpecialSemantics::IeeeLike),
        _ => return Err(FormatError::UnknownFormat(name.to_string())),
    };
    FormatSpec::new(&lower, e, m, FormatSpec::default_bias(e), storage, semantics)
}

/// A raw encoding paired with the format that interprets it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedScalar {
    bits: u64,
    spec: FormatSpec,
}

impl PackedScalar {
    /// Wrap a bit pattern. The pattern must fit the format's encoding bits
    /// and the format must be arithmetic-capable.
    pub fn new(bits: u64, spec: FormatSpec) -> Result<Self, FormatError> {
        spec.require_arithmetic()?;
        let width = spec.layout_bits();
        if width < 64 && bits >> width != 0 {
            return Err(FormatError::PatternTooWide { name: spec.name.clone(), bits, width });
        }
        Ok(PackedScalar { bits, spec })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }
    pub fn spec(&self) -> &FormatSpec {
        &self.spec
    }
}

/// IEEE-style classification of an encoded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpClass {
    Zero,
    Subnormal,
    Normal,
    Inf,
    Nan,
}

impl fmt::Display for FpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FpClass::Zero => "zero",
            FpClass::Subnormal => "subnormal",
            FpClass::Normal => "normal",
            FpClass::Inf => "inf",
            FpClass::Nan => "nan",
        };
        write!(f, "{s}")
    }
}

/// Exact power of two as f64. `e` must lie in `[-1074, 1023]`.
pub(crate) fn exp2i(e: i32) -> f64 {
    debug_assert!((-1074..=1023).contains(&e));
    if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (e + 1074))
    }
}

/// Multiply by 2^k exactly, stepping through the exponent range so that
/// intermediate scale factors stay representable.
pub(crate) fn mul_pow2(x: f64, k: i32) -> f64 {
    let mut v = x;
    let mut rem = k;
    while rem > 1023 {
        v *= exp2i(1023);
        rem -= 1023;
    }
    while rem < -1022 {
        v *= exp2i(-1022);
        rem += 1022;
    }
    v * exp2i(rem)
}

/// floor(log2 |x|) for finite nonzero x, from the bit pattern.
pub(crate) fn ilogb(x: f64) -> i32 {
    debug_assert!(x.is_finite() && x != 0.0);
    let bits = x.to_bits();
    let expf = ((bits >> 52) & 0x7FF) as i32;
    if expf != 0 {
        expf - 1023
    } else {
        // subnormal: value = mant * 2^-1074, msb of mant at bit 63-lz
        -1011 - (bits & 0x000F_FFFF_FFFF_FFFF).leading_zeros() as i32
    }
}

fn zero_bits(spec: &FormatSpec, negative: bool) -> u64 {
    (negative as u64) << spec.sign_shift()
}

fn inf_bits(spec: &FormatSpec, negative: bool) -> u64 {
    debug_assert_eq!(spec.special_semantics, SpecialSemantics::IeeeLike);
    zero_bits(spec, negative) | (spec.exponent_mask() << spec.mantissa_bits)
}

fn max_finite_bits(spec: &FormatSpec, negative: bool) -> u64 {
    let sign = zero_bits(spec, negative);
    match spec.special_semantics {
        SpecialSemantics::IeeeLike => {
            sign | ((spec.exponent_mask() - 1) << spec.mantissa_bits) | spec.mantissa_mask()
        }
        SpecialSemantics::E4m3Extended => {
            sign | (spec.exponent_mask() << spec.mantissa_bits) | (spec.mantissa_mask() - 1)
        }
    }
}

/// Canonical NaN: positive sign, quiet bit set, zero payload (single
/// all-ones pattern for `E4m3Extended`).
pub fn canonical_nan_bits(spec: &FormatSpec) -> u64 {
    match spec.special_semantics {
        SpecialSemantics::IeeeLike => {
            (spec.exponent_mask() << spec.mantissa_bits) | (1u64 << (spec.mantissa_bits - 1))
        }
        SpecialSemantics::E4m3Extended => {
            (spec.exponent_mask() << spec.mantissa_bits) | spec.mantissa_mask()
        }
    }
}

/// Exact value of an encoding, widened to f64.
pub fn decode(x: &PackedScalar) -> Result<f64, FormatError> {
    let spec = &x.spec;
    spec.require_arithmetic()?;
    let m = spec.mantissa_bits;
    let negative = (x.bits >> spec.sign_shift()) & 1 == 1;
    let expf = (x.bits >> m) & spec.exponent_mask();
    let mant = x.bits & spec.mantissa_mask();

    match spec.special_semantics {
        SpecialSemantics::IeeeLike if expf == spec.exponent_mask() => {
            if mant == 0 {
                return Ok(if negative { f64::NEG_INFINITY } else { f64::INFINITY });
            }
            return Ok(f64::NAN);
        }
        SpecialSemantics::E4m3Extended
            if expf == spec.exponent_mask() && mant == spec.mantissa_mask() =>
        {
            return Ok(f64::NAN);
        }
        _ => {}
    }

    let (significand, exp) = if expf == 0 {
        (mant, spec.min_exponent() - m as i32)
    } else {
        (mant | (1u64 << m), expf as i32 - spec.bias - m as i32)
    };
    let magnitude = significand as f64 * exp2i(exp);
    Ok(if negative { -magnitude } else { magnitude })
}

enum RoundDecision<'a> {
    Nearest,
    Toward,
    Stochastic(&'a mut SplitMix64),
}

impl RoundDecision<'_> {
    fn round_up(&mut self, grid_index: u64, frac: f64) -> bool {
        match self {
            RoundDecision::Toward => false,
            RoundDecision::Nearest => {
                frac > 0.5 || (frac == 0.5 && grid_index & 1 == 1)
            }
            RoundDecision::Stochastic(rng) => rng.next_unit_f64() < frac,
        }
    }
}

fn overflow_bits(spec: &FormatSpec, negative: bool, policy: OverflowPolicy) -> u64 {
    match spec.special_semantics {
        SpecialSemantics::IeeeLike => inf_bits(spec, negative),
        SpecialSemantics::E4m3Extended => match policy {
            OverflowPolicy::Saturate => max_finite_bits(spec, negative),
            OverflowPolicy::ToNan => canonical_nan_bits(spec),
        },
    }
}

fn encode_bits(
    v: f64,
    spec: &FormatSpec,
    decision: &mut RoundDecision<'_>,
    policy: OverflowPolicy,
) -> u64 {
    if v.is_nan() {
        return canonical_nan_bits(spec);
    }
    let negative = v.is_sign_negative();
    let av = v.abs();
    if av == 0.0 {
        return zero_bits(spec, negative);
    }
    let m = spec.mantissa_bits;
    let emin = spec.min_exponent();
    let emax = spec.max_exponent();

    if av.is_infinite() {
        return match spec.special_semantics {
            SpecialSemantics::IeeeLike => inf_bits(spec, negative),
            SpecialSemantics::E4m3Extended => overflow_bits(spec, negative, policy),
        };
    }

    // Beyond the last binade every mode except toward-zero overflows.
    if emax < 1023 && av >= exp2i(emax + 1) {
        return match decision {
            RoundDecision::Toward => max_finite_bits(spec, negative),
            _ => overflow_bits(spec, negative, policy),
        };
    }

    // Scale onto the grid of the target binade. `scaled` is exact: it is a
    // pure power-of-two shift and stays inside [2^-1074, 2^53).
    let binade = ilogb(av).max(emin);
    let grid_exp = binade - m as i32;
    let scaled = mul_pow2(av, -grid_exp);
    debug_assert!(scaled < (1u64 << (m + 1)) as f64);
    let mut index = scaled as u64;
    let frac = scaled - index as f64;
    if decision.round_up(index, frac) {
        index += 1;
    }

    if index == 0 {
        return zero_bits(spec, negative);
    }
    let mut exp = binade;
    if index == 1u64 << (m + 1) {
        index = 1u64 << m;
        exp += 1;
    }

    let nan_slot = spec.special_semantics == SpecialSemantics::E4m3Extended
        && exp == emax
        && index == (1u64 << (m + 1)) - 1;
    if exp > emax || nan_slot {
        return overflow_bits(spec, negative, policy);
    }

    let sign = zero_bits(spec, negative);
    if exp == emin && index < (1u64 << m) {
        sign | index // subnormal: exponent field zero
    } else {
        sign | (((exp + spec.bias) as u64) << m) | (index - (1u64 << m))
    }
}

/// Correctly rounded encoding of `v` with the default overflow policy.
pub fn encode(v: f64, spec: &FormatSpec, mode: RoundingMode) -> Result<PackedScalar, FormatError> {
    encode_with_policy(v, spec, mode, OverflowPolicy::default())
}

/// Correctly rounded encoding with an explicit overflow policy
/// (meaningful only for formats without infinities).
pub fn encode_with_policy(
    v: f64,
    spec: &FormatSpec,
    mode: RoundingMode,
    policy: OverflowPolicy,
) -> Result<PackedScalar, FormatError> {
    spec.require_arithmetic()?;
    let bits = match mode {
        RoundingMode::NearestEven => encode_bits(v, spec, &mut RoundDecision::Nearest, policy),
        RoundingMode::TowardZero => encode_bits(v, spec, &mut RoundDecision::Toward, policy),
        RoundingMode::Stochastic { seed } => {
            let mut rng = SplitMix64::new(seed);
            encode_bits(v, spec, &mut RoundDecision::Stochastic(&mut rng), policy)
        }
    };
    PackedScalar::new(bits, spec.clone())
}

/// Stochastically round `v`, drawing from the supplied generator state.
///
/// Each of the two neighboring representable values is chosen with
/// probability proportional to the distance from the other; exactly
/// representable inputs are returned unchanged.
pub fn stochastic_round(
    v: f64,
    spec: &FormatSpec,
    rng: &mut SplitMix64,
) -> Result<PackedScalar, FormatError> {
    spec.require_arithmetic()?;
    let bits = encode_bits(v, spec, &mut RoundDecision::Stochastic(rng), OverflowPolicy::default());
    PackedScalar::new(bits, spec.clone())
}

/// Classify an encoding under its format's semantics.
pub fn classify(x: &PackedScalar) -> FpClass {
    let spec = &x.spec;
    let expf = (x.bits >> spec.mantissa_bits) & spec.exponent_mask();
    let mant = x.bits & spec.mantissa_mask();
    match spec.special_semantics {
        SpecialSemantics::IeeeLike if expf == spec.exponent_mask() => {
            if mant == 0 {
                FpClass::Inf
            } else {
                FpClass::Nan
            }
        }
        SpecialSemantics::E4m3Extended
            if expf == spec.exponent_mask() && mant == spec.mantissa_mask() =>
        {
            FpClass::Nan
        }
        _ => {
            if expf == 0 {
                if mant == 0 {
                    FpClass::Zero
                } else {
                    FpClass::Subnormal
                }
            } else {
                FpClass::Normal
            }
        }
    }
}

/// Largest finite value of the format.
pub fn max_finite(spec: &FormatSpec) -> Result<f64, FormatError> {
    spec.require_arithmetic()?;
    decode(&PackedScalar::new(max_finite_bits(spec, false), spec.clone())?)
}

/// Smallest positive subnormal of the format.
pub fn min_positive_subnormal(spec: &FormatSpec) -> Result<f64, FormatError> {
    spec.require_arithmetic()?;
    decode(&PackedScalar::new(1, spec.clone())?)
}

/// Unit roundoff `2^(-mantissa_bits - 1)`.
pub fn unit_roundoff(spec: &FormatSpec) -> f64 {
    exp2i(-(spec.mantissa_bits as i32) - 1)
}

/// Spacing of the format's grid around the value of `x` (half-way values
/// round at half this distance). Returns `None` for infinities and NaNs.
pub fn ulp(x: &PackedScalar) -> Option<f64> {
    match classify(x) {
        FpClass::Inf | FpClass::Nan => None,
        _ => {
            let spec = &x.spec;
            let expf = (x.bits >> spec.mantissa_bits) & spec.exponent_mask();
            let exp = if expf == 0 { spec.min_exponent() } else { expf as i32 - spec.bias };
            Some(exp2i(exp - spec.mantissa_bits as i32))
        }
    }
}

/// Is `v` exactly representable in `spec`?
pub fn is_representable(v: f64, spec: &FormatSpec) -> Result<bool, FormatError> {
    if v.is_nan() {
        return Ok(true); // maps to the canonical NaN
    }
    let enc = encode(v, spec, RoundingMode::TowardZero)?;
    Ok(decode(&enc)?.to_bits() == v.to_bits())
}

/// Scalar operation kinds available through [`rounded_op`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Add,
    Mul,
    Fma,
}

/// Emulate one correctly rounded low-precision scalar operation on f64
/// carriers.
///
/// Restricted to formats of at most 32 storage bits: computing in f64 and
/// rounding once is then equivalent to a single rounding of the exact
/// result (the f64 intermediate carries at least `2p+2` significant bits).
/// `c` is the addend for `Fma` and ignored otherwise; `Fma` rounds once
/// after the exact `a*b + c`.
pub fn rounded_op(
    kind: OpKind,
    a: f64,
    b: f64,
    c: f64,
    spec: &FormatSpec,
    mode: RoundingMode,
) -> Result<f64, FormatError> {
    spec.require_arithmetic()?;
    if spec.storage_bits > 32 {
        return Err(FormatError::StorageTooWide(spec.name.clone(), spec.storage_bits));
    }
    for operand in [a, b].iter().chain((kind == OpKind::Fma).then_some(&c)) {
        if !is_representable(*operand, spec)? {
            return Err(FormatError::NotRepresentable { value: *operand, name: spec.name.clone() });
        }
    }
    let raw = match kind {
        OpKind::Add => a + b,
        OpKind::Mul => a * b,
        OpKind::Fma => a.mul_add(b, c),
    };
    decode(&encode(raw, spec, mode)?)
}
