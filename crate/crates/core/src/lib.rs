//! Approximates a convolutional network with a layered propositional logic
//! program.
//!
//! Kernel activation norms are binarised against per-kernel mean thresholds,
//! decision trees relate each kernel (or output class) to the previous layer's
//! kernels, the trees' true leaves become rules, and the simplified program is
//! evaluated against the original model by inference with default negation.
//!
//! ```no_run
//! use convlogic::{dataset, evaluate, induction, program};
//!
//! let d = dataset::load_dataset("data/")?;
//! let cfg = induction::ExtractionConfig::single_layer("conv13", 5, 0.01);
//! let p = program::simplify(&induction::extract_program(&d, &cfg)?)?;
//! let m = evaluate::evaluate(&p, &d, &["val".to_string()])?;
//! println!("{}", program::serialise(&p));
//! # Ok::<(), convlogic::Error>(())
//! ```

pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod induction;
pub mod inspect;
pub mod matrix;
pub mod program;
pub mod quantise;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type NormMatrixF32 = matrix::NormMatrix<f32>;
pub type NormMatrixF64 = matrix::NormMatrix<f64>;
pub type ThresholdsF32 = quantise::ThresholdVector<f32>;
pub type ThresholdsF64 = quantise::ThresholdVector<f64>;
pub type InductionParamsF32 = induction::InductionParams<f32>;
pub type InductionParamsF64 = induction::InductionParams<f64>;
