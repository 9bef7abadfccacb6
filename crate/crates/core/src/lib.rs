//! Diagnostics for coordinate-wise clipped optimizers on synthetic objectives.
//!
//! - [`diffcore`]: objective interface and Hessian-vector products
//! - [`problems`]: intro quadratic, descent-lemma instances, MLP classifier
//! - [`clip`]: percentile coordinate clipping
//! - [`optim`]: SGD, normalized SGD, signSGD, Adam, Adafactor, Lion
//! - [`probe`]: directional sharpness, landscape scans, histograms, descent-lemma verifier
//! - [`trajectory`]: training with shadow optimizer states and scheduled probes
//! - [`gauss_newton`]: Gauss-Newton spectral norm and coordinate removal

pub mod clip;
pub mod diffcore;
pub mod error;
pub mod gauss_newton;
pub mod optim;
pub mod probe;
pub mod problems;
pub mod trajectory;

pub use diffcore::{gradient, hvp, value, HvpMethod, Objective, ParamVector};
pub use error::{Error, Result};
