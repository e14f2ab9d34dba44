//! Laboratory for learning hierarchical polynomials `h = g ∘ p` with a
//! three-layer bottleneck network.
//!
//! The crate is organised bottom-up:
//!
//! - [`polyalg`]: exact sparse polynomials over `R^d`, Gaussian moments and
//!   Hermite projections. This is the ground-truth oracle for everything else.
//! - [`hermite`]: fast numeric Hermite evaluation and closed-form identities.
//! - [`target`]: hidden features `p`, links `g` and centered targets.
//! - [`stein`]: exact certification of the approximate Stein lemma.
//! - [`network`]: the residual bottleneck network, its initialization and
//!   hand-derived gradients.
//! - [`train`]: two-stage layerwise gradient descent and joint Adam.
//! - [`eval`]: test metrics, the degree-capture identity, a kernel ridge
//!   baseline and sweep orchestration.
//! - [`rf1d`]: univariate ReLU random-feature representations.
//!
//! All randomness is derived from explicit seeds through [`rng::Streams`].

pub mod error;
pub mod eval;
pub mod hermite;
pub mod kv;
pub mod network;
pub mod par;
pub mod polyalg;
pub mod rf1d;
pub mod rng;
pub mod stein;
pub mod target;
pub mod train;

pub use error::{Error, Result};
