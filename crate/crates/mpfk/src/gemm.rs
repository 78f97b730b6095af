//! Emulated high-precision GEMM via integer slices.
//!
//! An f64 matrix is decomposed per row (or column) into `s` narrow integer
//! digit matrices against a power-of-two scale: repeatedly multiply the
//! scaled remainder by `2^w` and truncate toward zero. Slice pairs are then
//! multiplied exactly in integer arithmetic and the products recombined into
//! f64 with fixed ordering, so the whole pipeline is deterministic and, for
//! operands with few enough significant bits, exact.
//!
//! [`oracle_gemm_exact`] is the independent reference: it accumulates every
//! dot product in arbitrary-precision integers and rounds once to f64. It
//! shares no code with the slicing path.

use crate::formats::{exp2i, ilogb, mul_pow2};
use crate::matrix::{DenseMatrix, MatrixError};
use crate::parallel;
use num_bigint::{BigInt, Sign};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GemmError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("overflow guard: k={k} inner products of {w}-bit slices can exceed a {accumulator_bits}-bit accumulator")]
    OverflowGuard { k: usize, w: u32, accumulator_bits: u32 },
    #[error("invalid emulation config: {0}")]
    InvalidConfig(String),
    #[error("entry at ({row}, {col}) cannot be sliced exactly for any slice count (scale shift leaves the f64 range)")]
    NotSliceable { row: usize, col: usize },
}

/// Whether scale exponents are chosen per row or per column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    ByRow,
    ByCol,
}

/// Which slice pairs (p, q) an emulated multiply evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairPolicy {
    /// Only pairs with `p + q < s`: s(s+1)/2 integer multiplies. The dropped
    /// pairs contribute below the s-slice reconstruction error.
    #[default]
    Triangular,
    /// All s^2 pairs, for error studies.
    Full,
}

/// Integer slice matrix; entries lie in `(-2^w, 2^w)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i32>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn at(&self, i: usize, j: usize) -> i32 {
        self.data[i * self.cols + j]
    }
}

/// Product of two slice matrices, held in the 64-bit accumulator type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Int64Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i64>,
}

impl Int64Matrix {
    pub fn at(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }
}

/// Result of [`split`]: per-group power-of-two scales plus `s` digit matrices.
#[derive(Debug, Clone)]
pub struct SliceDecomposition {
    pub orientation: Orientation,
    /// One exponent per row (`ByRow`) or column (`ByCol`); the group maximum
    /// is strictly below `2^e`.
    pub scale_exponents: Vec<i32>,
    pub slices: Vec<IntMatrix>,
    pub slice_width: u32,
}

impl SliceDecomposition {
    pub fn slice_count(&self) -> usize {
        self.slices.len()
    }

    fn group_exponent(&self, i: usize, j: usize) -> i32 {
        match self.orientation {
            Orientation::ByRow => self.scale_exponents[i],
            Orientation::ByCol => self.scale_exponents[j],
        }
    }
}

/// Configuration for the emulated multiply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmulationConfig {
    /// Slice count.
    pub s: usize,
    /// Bits per slice digit; 7 keeps digits in signed 8-bit storage.
    pub w: u32,
    pub pair_policy: PairPolicy,
    /// Modeled accumulator width for the overflow guard.
    pub accumulator_bits: u32,
    /// Integer kernel tile shape (m, n, k).
    pub tile: (usize, usize, usize),
}

impl Default for EmulationConfig {
    fn default() -> Self {
        EmulationConfig {
            s: 7,
            w: 7,
            pair_policy: PairPolicy::Triangular,
            accumulator_bits: 64,
            tile: (16, 16, 8),
        }
    }
}

impl EmulationConfig {
    pub fn with_slices(s: usize) -> Self {
        EmulationConfig { s, ..Default::default() }
    }

    fn validate(&self) -> Result<(), GemmError> {
        if self.s == 0 {
            return Err(GemmError::InvalidConfig("slice count must be at least 1".into()));
        }
        if self.w == 0 || self.w > 26 {
            return Err(GemmError::InvalidConfig(format!(
                "slice width {} outside 1..=26",
                self.w
            )));
        }
        if self.accumulator_bits < 2 * self.w + 1 || self.accumulator_bits > 64 {
            return Err(GemmError::InvalidConfig(format!(
                "accumulator width {} outside {}..=64",
                self.accumulator_bits,
                2 * self.w + 1
            )));
        }
        if self.tile.0 == 0 || self.tile.1 == 0 || self.tile.2 == 0 {
            return Err(GemmError::InvalidConfig("tile dimensions must be positive".into()));
        }
        Ok(())
    }

    fn check_overflow_guard(&self, k: usize) -> Result<(), GemmError> {
        let worst = (k as u128) << (2 * self.w);
        if worst > 1u128 << (self.accumulator_bits - 1) {
            return Err(GemmError::OverflowGuard {
                k,
                w: self.w,
                accumulator_bits: self.accumulator_bits,
            });
        }
        Ok(())
    }
}

/// Smallest exponent `e` with `amax < 2^e`; zero groups get 0.
fn group_scale_exponent(amax: f64) -> i32 {
    if amax == 0.0 {
        0
    } else {
        ilogb(amax) + 1
    }
}

/// Decompose `m` into `s` integer slices of `w` bits against per-group
/// power-of-two scales.
pub fn split(
    m: &DenseMatrix,
    orientation: Orientation,
    s: usize,
    w: u32,
) -> Result<SliceDecomposition, GemmError> {
    m.check_finite()?;
    if s == 0 || w == 0 || w > 26 {
        return Err(GemmError::InvalidConfig(format!("split needs s >= 1 and 1 <= w <= 26, got s={s} w={w}")));
    }
    let groups = match orientation {
        Orientation::ByRow => m.rows(),
        Orientation::ByCol => m.cols(),
    };
    let mut scale_exponents = vec![0i32; groups];
    let mut slices = vec![IntMatrix::zeros(m.rows(), m.cols()); s];
    let radix = exp2i(w as i32);

    let entries = |g: usize| -> Vec<(usize, usize)> {
        match orientation {
            Orientation::ByRow => (0..m.cols()).map(|j| (g, j)).collect(),
            Orientation::ByCol => (0..m.rows()).map(|i| (i, g)).collect(),
        }
    };

    for g in 0..groups {
        let positions = entries(g);
        let amax = positions.iter().map(|&(i, j)| m[(i, j)].abs()).fold(0.0, f64::max);
        let e = group_scale_exponent(amax);
        scale_exponents[g] = e;
        for (i, j) in positions {
            let mut r = mul_pow2(m[(i, j)], -e);
            for slice in slices.iter_mut() {
                r *= radix;
                let digit = r.trunc();
                slice.data[i * m.cols() + j] = digit as i32;
                r -= digit;
            }
        }
    }

    Ok(SliceDecomposition { orientation, scale_exponents, slices, slice_width: w })
}

/// Rebuild the f64 matrix from a decomposition, summing slice contributions
/// per entry from slice 0 upward.
pub fn reconstruct(d: &SliceDecomposition) -> DenseMatrix {
    let (rows, cols) = (d.slices[0].rows, d.slices[0].cols);
    let w = d.slice_width as i32;
    DenseMatrix::from_fn(rows, cols, |i, j| {
        let e = d.group_exponent(i, j);
        let mut acc = 0.0;
        for (p, slice) in d.slices.iter().enumerate() {
            let digit = slice.at(i, j);
            if digit != 0 {
                acc += mul_pow2(digit as f64, e - w * (p as i32 + 1));
            }
        }
        acc
    })
}

/// Exact integer product of two slice matrices with tiled accumulation.
///
/// Tiling (and any parallel split over row blocks) cannot change the result:
/// 64-bit integer addition is associative, and the guard rejects any shape
/// that could overflow the modeled accumulator.
pub fn integer_gemm(
    a: &IntMatrix,
    b: &IntMatrix,
    cfg: &EmulationConfig,
) -> Result<Int64Matrix, GemmError> {
    if a.cols != b.rows {
        return Err(GemmError::Dimension(format!(
            "integer_gemm: {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    cfg.validate()?;
    cfg.check_overflow_guard(a.cols)?;

    let (rows, cols, inner) = (a.rows, b.cols, a.cols);
    let (tile_m, tile_n, tile_k) = cfg.tile;
    let mut data = vec![0i64; rows * cols];

    parallel::for_each_chunk_mut(&mut data, tile_m * cols, |block, chunk| {
        let row0 = block * tile_m;
        let local_rows = chunk.len() / cols;
        for kk in (0..inner).step_by(tile_k) {
            let k_end = (kk + tile_k).min(inner);
            for jj in (0..cols).step_by(tile_n) {
                let j_end = (jj + tile_n).min(cols);
                for li in 0..local_rows {
                    let arow = &a.data[(row0 + li) * inner..(row0 + li + 1) * inner];
                    let crow = &mut chunk[li * cols..(li + 1) * cols];
                    for kx in kk..k_end {
                        let av = arow[kx] as i64;
                        if av == 0 {
                            continue;
                        }
                        let brow = &b.data[kx * cols..(kx + 1) * cols];
                        for j in jj..j_end {
                            crow[j] += av * brow[j] as i64;
                        }
                    }
                }
            }
        }
    });

    Ok(Int64Matrix { rows, cols, data })
}

/// Instrumentation record for one emulated multiply.
#[derive(Debug, Clone, PartialEq)]
pub struct GemmStats {
    /// Number of integer slice products actually performed.
    pub slice_multiplies: u64,
    /// Modeled operation count: 2*m*n*k per slice product.
    pub modeled_flops: f64,
}

fn admitted_pairs(cfg: &EmulationConfig) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for p in 0..cfg.s {
        for q in 0..cfg.s {
            let admitted = match cfg.pair_policy {
                PairPolicy::Triangular => p + q < cfg.s,
                PairPolicy::Full => true,
            };
            if admitted {
                pairs.push((p, q));
            }
        }
    }
    // fixed recombination order: ascending p+q, then ascending p
    pairs.sort_by_key(|&(p, q)| (p + q, p));
    pairs
}

/// Emulate `A * B` through integer slices, returning instrumentation too.
pub fn emulated_gemm_with_stats(
    a: &DenseMatrix,
    b: &DenseMatrix,
    cfg: &EmulationConfig,
) -> Result<(DenseMatrix, GemmStats), GemmError> {
    if a.cols() != b.rows() {
        return Err(GemmError::Dimension(format!(
            "emulated_gemm: {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    cfg.validate()?;
    let sa = split(a, Orientation::ByRow, cfg.s, cfg.w)?;
    let sb = split(b, Orientation::ByCol, cfg.s, cfg.w)?;

    let pairs = admitted_pairs(cfg);
    let mut products = Vec::with_capacity(pairs.len());
    let mut slice_multiplies = 0u64;
    for &(p, q) in &pairs {
        products.push(integer_gemm(&sa.slices[p], &sb.slices[q], cfg)?);
        slice_multiplies += 1;
    }

    let (rows, cols) = (a.rows(), b.cols());
    let w = cfg.w as i32;
    let mut out = DenseMatrix::zeros(rows, cols);
    let ea = &sa.scale_exponents;
    let eb = &sb.scale_exponents;
    parallel::for_each_chunk_mut(out.data_mut(), cols, |i, row| {
        for (j, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (idx, &(p, q)) in pairs.iter().enumerate() {
                let c = products[idx].data[i * cols + j];
                // a zero term cannot change the running f64 sum; skip the scaling
                if c != 0 {
                    acc += mul_pow2(c as f64, ea[i] + eb[j] - w * (p + q + 2) as i32);
                }
            }
            *slot = acc;
        }
    });

    let modeled_flops = 2.0 * rows as f64 * cols as f64 * a.cols() as f64 * slice_multiplies as f64;
    Ok((out, GemmStats { slice_multiplies, modeled_flops }))
}

/// Emulate `A * B` through integer slices.
pub fn emulated_gemm(
    a: &DenseMatrix,
    b: &DenseMatrix,
    cfg: &EmulationConfig,
) -> Result<DenseMatrix, GemmError> {
    emulated_gemm_with_stats(a, b, cfg).map(|(m, _)| m)
}

/// `x = mant * 2^exp` exactly, with the mantissa reduced to odd.
fn f64_to_int_exp(x: f64) -> (i64, i32) {
    if x == 0.0 {
        return (0, 0);
    }
    debug_assert!(x.is_finite());
    let bits = x.to_bits();
    let raw_mant = bits & 0x000F_FFFF_FFFF_FFFF;
    let expf = ((bits >> 52) & 0x7FF) as i32;
    let (mut mant, mut exp) = if expf == 0 {
        (raw_mant as i64, -1074)
    } else {
        ((raw_mant | 1 << 52) as i64, expf - 1075)
    };
    let tz = mant.trailing_zeros();
    mant >>= tz;
    exp += tz as i32;
    if x.is_sign_negative() {
        mant = -mant;
    }
    (mant, exp)
}

/// Round `value = acc * 2^exp` once to the nearest f64 (ties to even).
fn round_big_to_f64(acc: &BigInt, exp: i64) -> f64 {
    if acc.sign() == Sign::NoSign {
        return 0.0;
    }
    let negative = acc.sign() == Sign::Minus;
    let mag = acc.magnitude();
    let msb = mag.bits() as i64 - 1 + exp; // value in [2^msb, 2^(msb+1))
    if msb > 1024 {
        return if negative { f64::NEG_INFINITY } else { f64::INFINITY };
    }
    let grid = (msb - 52).max(-1074);
    let shift = grid - exp;
    let (mant, grid): (u64, i64) = if shift <= 0 {
        let widened = mag << (-shift) as u64;
        (u64::try_from(&widened).expect("shifted mantissa fits 53 bits"), grid)
    } else {
        let sh = shift as u64;
        let keep = u64::try_from(&(mag >> sh)).expect("kept mantissa fits 53 bits");
        let round = mag.bit(sh - 1);
        let sticky = sh >= 2 && mag.trailing_zeros().map_or(false, |tz| tz < sh - 1);
        let mut mant = keep;
        if round && (sticky || mant & 1 == 1) {
            mant += 1;
        }
        if mant == 1 << 53 {
            (1u64 << 52, grid + 1)
        } else {
            (mant, grid)
        }
    };
    if mant == 0 {
        return if negative { -0.0 } else { 0.0 };
    }
    let v = mul_pow2(mant as f64, grid as i32);
    if negative {
        -v
    } else {
        v
    }
}

/// Exact reference product: every dot product is accumulated in
/// arbitrary-precision integers and rounded once to nearest f64.
pub fn oracle_gemm_exact(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, GemmError> {
    if a.cols() != b.rows() {
        return Err(GemmError::Dimension(format!(
            "oracle_gemm_exact: {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    a.check_finite()?;
    b.check_finite()?;
    let (rows, cols, inner) = (a.rows(), b.cols(), a.cols());
    let da: Vec<(i64, i32)> = a.data().iter().map(|&x| f64_to_int_exp(x)).collect();
    let db: Vec<(i64, i32)> = b.data().iter().map(|&x| f64_to_int_exp(x)).collect();

    let mut out = DenseMatrix::zeros(rows, cols);
    parallel::fill_indexed(out.data_mut(), |idx| {
        let (i, j) = (idx / cols, idx % cols);
        let mut acc = BigInt::from(0);
        let mut acc_exp = 0i64;
        let mut started = false;
        for kx in 0..inner {
            let (ma, ea) = da[i * inner + kx];
            let (mb, eb) = db[kx * cols + j];
            if ma == 0 || mb == 0 {
                continue;
            }
            let term = BigInt::from(ma as i128 * mb as i128);
            let term_exp = ea as i64 + eb as i64;
            if !started {
                acc = term;
                acc_exp = term_exp;
                started = true;
            } else if term_exp >= acc_exp {
                acc += term << (term_exp - acc_exp) as u64;
            } else {
                acc <<= (acc_exp - term_exp) as u64;
                acc += term;
                acc_exp = term_exp;
            }
        }
        round_big_to_f64(&acc, acc_exp)
    });
    Ok(out)
}

/// Smallest slice count for which split/reconstruct is lossless for `m`.
pub fn required_slices_for_exact(m: &DenseMatrix, w: u32) -> Result<usize, GemmError> {
    m.check_finite()?;
    if w == 0 || w > 26 {
        return Err(GemmError::InvalidConfig(format!("slice width {w} outside 1..=26")));
    }
    let mut needed = 1usize;
    for i in 0..m.rows() {
        let amax = m.row(i).iter().map(|v| v.abs()).fold(0.0, f64::max);
        let e = group_scale_exponent(amax);
        for j in 0..m.cols() {
            let v = m[(i, j)];
            if v == 0.0 {
                continue;
            }
            let (_, low_bit) = f64_to_int_exp(v);
            // scaling by 2^-e must stay inside f64, or no slice count recovers v
            if low_bit - e < -1074 {
                return Err(GemmError::NotSliceable { row: i, col: j });
            }
            // digits must reach down to the entry's lowest set bit
            let span = (e - low_bit) as u32;
            needed = needed.max(span.div_ceil(w) as usize);
        }
    }
    Ok(needed)
}

/// Error statistics of an emulated multiply against the exact oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct GemmErrorReport {
    pub rows: usize,
    pub cols: usize,
    pub inner: usize,
    pub max_rel_error: f64,
    pub median_rel_error: f64,
    pub slice_multiplies: u64,
    pub modeled_flops: f64,
}

/// Run the emulated multiply and compare it elementwise with the oracle.
pub fn gemm_error_report(
    a: &DenseMatrix,
    b: &DenseMatrix,
    cfg: &EmulationConfig,
) -> Result<GemmErrorReport, GemmError> {
    let (emulated, stats) = emulated_gemm_with_stats(a, b, cfg)?;
    let exact = oracle_gemm_exact(a, b)?;
    let mut rels: Vec<f64> = emulated
        .data()
        .iter()
        .zip(exact.data())
        .map(|(&e, &x)| relative_error(e, x))
        .collect();
    rels.sort_by(|p, q| p.partial_cmp(q).expect("relative errors are never NaN"));
    let max_rel_error = *rels.last().unwrap_or(&0.0);
    let median_rel_error = if rels.is_empty() {
        0.0
    } else if rels.len() % 2 == 1 {
        rels[rels.len() / 2]
    } else {
        0.5 * (rels[rels.len() / 2 - 1] + rels[rels.len() / 2])
    };
    Ok(GemmErrorReport {
        rows: a.rows(),
        cols: b.cols(),
        inner: a.cols(),
        max_rel_error,
        median_rel_error,
        slice_multiplies: stats.slice_multiplies,
        modeled_flops: stats.modeled_flops,
    })
}

/// |approx - exact| / |exact|, with absolute error when exact is zero.
pub fn relative_error(approx: f64, exact: f64) -> f64 {
    let diff = (approx - exact).abs();
    if exact == 0.0 {
        diff
    } else {
        diff / exact.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_matrix(n: usize, k: usize, seed: u64) -> DenseMatrix {
        let mut rng = SplitMix64::new(seed);
        DenseMatrix::from_fn(n, k, |_, _| 2.0 * rng.next_symmetric_f64())
    }

    #[test]
    fn split_zero_matrix() {
        let m = DenseMatrix::zeros(3, 4);
        let d = split(&m, Orientation::ByRow, 3, 7).unwrap();
        assert!(d.scale_exponents.iter().all(|&e| e == 0));
        assert!(d.slices.iter().all(|s| s.data.iter().all(|&v| v == 0)));
        assert!(reconstruct(&d).bit_eq(&m));
    }

    #[test]
    fn split_single_slice_halves() {
        let m = DenseMatrix::from_vec(2, 2, vec![1.0, -0.5, 0.5, -1.0]).unwrap();
        let d = split(&m, Orientation::ByRow, 1, 7).unwrap();
        assert!(reconstruct(&d).bit_eq(&m));
    }

    #[test]
    fn split_075_single_slice_digit() {
        let m = DenseMatrix::from_vec(1, 1, vec![0.75]).unwrap();
        let d = split(&m, Orientation::ByRow, 1, 7).unwrap();
        assert_eq!(d.scale_exponents[0], 0);
        assert_eq!(d.slices[0].at(0, 0), 96);
    }

    #[test]
    fn split_rejects_non_finite_with_position() {
        let mut m = DenseMatrix::zeros(2, 2);
        m[(0, 1)] = f64::INFINITY;
        let err = split(&m, Orientation::ByRow, 2, 7).unwrap_err();
        assert!(matches!(err, GemmError::Matrix(MatrixError::NonFinite { row: 0, col: 1, .. })));
    }

    #[test]
    fn split_reconstruction_error_bound() {
        let m = random_matrix(16, 16, 1234);
        let (s, w) = (7usize, 7u32);
        let d = split(&m, Orientation::ByRow, s, w).unwrap();
        let r = reconstruct(&d);
        for i in 0..16 {
            let bound = exp2i(d.scale_exponents[i] - (w as i32) * s as i32);
            for j in 0..16 {
                let err = (m[(i, j)] - r[(i, j)]).abs();
                assert!(err < bound, "({i},{j}): err {err:e} bound {bound:e}");
            }
        }
    }

    #[test]
    fn split_digits_fit_signed_width() {
        let m = random_matrix(12, 9, 99);
        for w in [1u32, 3, 7, 11] {
            let d = split(&m, Orientation::ByCol, 4, w).unwrap();
            let cap = (1i32 << w) - 1;
            for s in &d.slices {
                assert!(s.data.iter().all(|&v| v.abs() <= cap));
            }
        }
    }

    #[test]
    fn reconstruct_identity_for_various_shapes() {
        for s in [1usize, 2, 5] {
            for w in [1u32, 4, 7] {
                let d = split(&DenseMatrix::identity(6), Orientation::ByRow, s, w).unwrap();
                assert!(reconstruct(&d).bit_eq(&DenseMatrix::identity(6)), "s={s} w={w}");
            }
        }
    }

    #[test]
    fn reconstruct_exact_when_bits_fit() {
        // entries with exactly s*w = 21 significant bits after row scaling
        let mut rng = SplitMix64::new(7);
        let m = DenseMatrix::from_fn(8, 8, |_, _| {
            let mant = (rng.next_u64() % (1 << 21)) as f64;
            let sign = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
            sign * mant * exp2i(-21)
        });
        let d = split(&m, Orientation::ByRow, 3, 7).unwrap();
        assert!(reconstruct(&d).bit_eq(&m));
    }

    #[test]
    fn integer_gemm_identity_and_1x1() {
        let id = IntMatrix {
            rows: 3,
            cols: 3,
            data: vec![1, 0, 0, 0, 1, 0, 0, 0, 1],
        };
        let cfg = EmulationConfig::default();
        let c = integer_gemm(&id, &id, &cfg).unwrap();
        assert_eq!(c.data, vec![1, 0, 0, 0, 1, 0, 0, 0, 1]);

        let a = IntMatrix { rows: 1, cols: 1, data: vec![-7] };
        let b = IntMatrix { rows: 1, cols: 1, data: vec![9] };
        assert_eq!(integer_gemm(&a, &b, &cfg).unwrap().data, vec![-63]);
    }

    #[test]
    fn integer_gemm_matches_naive_loop() {
        let mut rng = SplitMix64::new(42);
        let k = 64;
        let mut digit = |by: u32| (rng.next_u64() % (1 << (by + 1))) as i32 - (1 << by);
        let a = IntMatrix {
            rows: 13,
            cols: k,
            data: (0..13 * k).map(|_| digit(7)).collect(),
        };
        let b = IntMatrix {
            rows: k,
            cols: 9,
            data: (0..k * 9).map(|_| digit(7)).collect(),
        };
        let cfg = EmulationConfig::default();
        let c = integer_gemm(&a, &b, &cfg).unwrap();
        for i in 0..13 {
            for j in 0..9 {
                let mut want = 0i64;
                for kx in 0..k {
                    want += a.at(i, kx) as i64 * b.at(kx, j) as i64;
                }
                assert_eq!(c.at(i, j), want, "({i},{j})");
            }
        }
    }

    #[test]
    fn integer_gemm_tiling_invariant() {
        let mut rng = SplitMix64::new(5);
        let mut digit = || (rng.next_u64() % 255) as i32 - 127;
        let a = IntMatrix { rows: 20, cols: 33, data: (0..20 * 33).map(|_| digit()).collect() };
        let b = IntMatrix { rows: 33, cols: 18, data: (0..33 * 18).map(|_| digit()).collect() };
        let base = integer_gemm(&a, &b, &EmulationConfig::default()).unwrap();
        for tile in [(1, 1, 1), (4, 3, 5), (32, 32, 32)] {
            let cfg = EmulationConfig { tile, ..Default::default() };
            assert_eq!(integer_gemm(&a, &b, &cfg).unwrap(), base, "tile {tile:?}");
        }
    }

    #[test]
    fn overflow_guard_trips_before_compute() {
        let k = 3000;
        let a = IntMatrix { rows: 1, cols: k, data: vec![0; k] };
        let b = IntMatrix { rows: k, cols: 1, data: vec![0; k] };
        let cfg = EmulationConfig { accumulator_bits: 24, ..Default::default() };
        assert!(matches!(
            integer_gemm(&a, &b, &cfg),
            Err(GemmError::OverflowGuard { .. })
        ));
    }

    #[test]
    fn emulated_identity_is_exact() {
        let id = DenseMatrix::identity(8);
        let out = emulated_gemm(&id, &id, &EmulationConfig::default()).unwrap();
        assert!(out.bit_eq(&id));
    }

    #[test]
    fn triangular_policy_multiply_count() {
        let m = random_matrix(8, 8, 3);
        for s in 1..=7 {
            let cfg = EmulationConfig::with_slices(s);
            let (_, stats) = emulated_gemm_with_stats(&m, &m, &cfg).unwrap();
            assert_eq!(stats.slice_multiplies as usize, s * (s + 1) / 2, "s={s}");
            let full = EmulationConfig { pair_policy: PairPolicy::Full, ..cfg };
            let (_, stats) = emulated_gemm_with_stats(&m, &m, &full).unwrap();
            assert_eq!(stats.slice_multiplies as usize, s * s, "s={s} full");
        }
    }

    #[test]
    fn emulated_error_shrinks_with_slices() {
        let a = random_matrix(32, 32, 2024);
        let b = random_matrix(32, 32, 2025);
        let exact = oracle_gemm_exact(&a, &b).unwrap();
        let mut errs = Vec::new();
        for s in [1usize, 3, 7] {
            let out = emulated_gemm(&a, &b, &EmulationConfig::with_slices(s)).unwrap();
            let max_rel = out
                .data()
                .iter()
                .zip(exact.data())
                .map(|(&e, &x)| relative_error(e, x))
                .fold(0.0, f64::max);
            errs.push(max_rel);
        }
        assert!(errs[0] > errs[1], "s=1 {:e} vs s=3 {:e}", errs[0], errs[1]);
        assert!(errs[1] > errs[2], "s=3 {:e} vs s=7 {:e}", errs[1], errs[2]);
        // s=7 with w=7 captures 49 bits; expect near-f64-level agreement
        assert!(errs[2] < 1e-12, "s=7 max rel {:e}", errs[2]);
    }

    #[test]
    fn power_of_two_scaling_equivariance() {
        let a = random_matrix(10, 12, 8);
        let b = random_matrix(12, 9, 9);
        let cfg = EmulationConfig::with_slices(4);
        let base = emulated_gemm(&a, &b, &cfg).unwrap();
        for t in [-12i32, -1, 3, 20] {
            let scaled = emulated_gemm(&a.scale(exp2i(t)), &b, &cfg).unwrap();
            assert!(scaled.bit_eq(&base.scale(exp2i(t))), "t={t}");
        }
    }

    #[test]
    fn oracle_simple_cases() {
        let id = DenseMatrix::identity(4);
        assert!(oracle_gemm_exact(&id, &id).unwrap().bit_eq(&id));

        let a = DenseMatrix::from_vec(1, 1, vec![0.1]).unwrap();
        let b = DenseMatrix::from_vec(1, 1, vec![0.3]).unwrap();
        let c = oracle_gemm_exact(&a, &b).unwrap();
        assert_eq!(c[(0, 0)], 0.1f64 * 0.3f64); // one multiply is already correctly rounded
    }

    #[test]
    fn oracle_matches_fp64_gemm_on_exact_inputs() {
        // power-of-two entries keep every fp64 partial sum exact
        let mut rng = SplitMix64::new(77);
        let mut pow2 = || exp2i((rng.next_u64() % 9) as i32 - 4);
        let a = DenseMatrix::from_fn(6, 6, |_, _| pow2());
        let b = DenseMatrix::from_fn(6, 6, |_, _| pow2());
        let oracle = oracle_gemm_exact(&a, &b).unwrap();
        let naive = DenseMatrix::from_fn(6, 6, |i, j| {
            let mut acc = 0.0;
            for kx in 0..6 {
                acc += a[(i, kx)] * b[(kx, j)];
            }
            acc
        });
        assert!(oracle.bit_eq(&naive));
    }

    #[test]
    fn oracle_catches_cancellation() {
        // 1e16 + 1 - 1e16 in a dot product: fp64 loses the 1, the oracle keeps it
        let a = DenseMatrix::from_vec(1, 3, vec![1.0, 1.0, 1.0]).unwrap();
        let b = DenseMatrix::from_vec(3, 1, vec![1e16, 1.0, -1e16]).unwrap();
        let c = oracle_gemm_exact(&a, &b).unwrap();
        assert_eq!(c[(0, 0)], 1.0);
    }

    #[test]
    fn required_slices_examples() {
        assert_eq!(required_slices_for_exact(&DenseMatrix::identity(4), 7).unwrap(), 1);
        assert_eq!(required_slices_for_exact(&DenseMatrix::zeros(3, 3), 7).unwrap(), 1);

        // odd 53-bit mantissas in [1, 2): need ceil(53/7) = 8 slices
        let mut rng = SplitMix64::new(13);
        let m = DenseMatrix::from_fn(4, 4, |_, _| {
            f64::from_bits((1023u64 << 52) | (rng.next_u64() & ((1 << 52) - 1)) | 1)
        });
        let s = required_slices_for_exact(&m, 7).unwrap();
        assert_eq!(s, 8);
        // verify minimality by reconstruction
        let exact = split(&m, Orientation::ByRow, s, 7).unwrap();
        assert!(reconstruct(&exact).bit_eq(&m));
        let short = split(&m, Orientation::ByRow, s - 1, 7).unwrap();
        assert!(!reconstruct(&short).bit_eq(&m));
    }

    #[test]
    fn error_report_counts_and_exactness() {
        let a = random_matrix(16, 16, 100);
        let b = random_matrix(16, 16, 101);
        let rep = gemm_error_report(&a, &b, &EmulationConfig::default()).unwrap();
        assert_eq!(rep.slice_multiplies, 28);
        assert_eq!(rep.modeled_flops, 2.0 * 16.0 * 16.0 * 16.0 * 28.0);
        assert!(rep.max_rel_error < 1e-12);
        assert!(rep.median_rel_error <= rep.max_rel_error);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(4, 2);
        assert!(matches!(
            emulated_gemm(&a, &b, &EmulationConfig::default()),
            Err(GemmError::Dimension(_))
        ));
    }
}
