//! Mixed-precision floating-point toolkit.
//!
//! The crate bundles the numerical machinery behind desk-scale studies of
//! reduced-precision hardware:
//!
//! - [`formats`]: bit-exact software floating-point formats (FP8 E4M3/E5M2,
//!   FP16, BF16, TF32, FP32, FP64) with nearest, toward-zero, and stochastic
//!   rounding, carried in f64.
//! - [`gemm`]: emulation of high-precision matrix multiplication by
//!   splitting operands into narrow integer slices, multiplying the slices
//!   exactly, and recombining, plus an exact big-integer reference product.
//! - [`ir`]: mixed-precision iterative refinement (factor low, refine in
//!   FP64) with the HPL backward-error acceptance metric.
//! - [`analyzer`]: hardware figure-of-merit sheets, Bytes/FLOP and roofline
//!   arithmetic, speedup/efficiency ratios.
//! - [`bench`]: deterministic mini-HPL and mini-HPL-MxP drivers with flop
//!   accounting and energy metrics from user-supplied power models.
//!
//! All entry points are deterministic for fixed seeds: results are bitwise
//! identical whether the `parallel` feature (rayon, on by default) is
//! enabled or not.

pub mod formats;
pub mod gemm;
pub mod matrix;
mod parallel;
pub mod rng;
