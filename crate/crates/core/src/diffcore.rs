//! Objective interface, parameter vectors and Hessian-vector products.
//!
//! Every objective exposes value, gradient and (optionally) an analytic
//! Hessian-vector product. The central-difference HVP works on any objective
//! and doubles as the oracle that analytic implementations are checked
//! against.

use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Flat vector of 64-bit parameter coordinates.
///
/// The length is fixed at construction. Vectors built through [`ParamVector::new`]
/// are checked for finiteness; vectors produced by arithmetic inside the crate
/// may carry non-finite values when an iteration diverges, and consumers such as
/// [`value`] report those as errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { index, value });
        }
        Ok(Self(data))
    }

    pub(crate) fn from_raw(data: Vec<f64>) -> Self {
        Self(data)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> ParamVector {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    /// Returns `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &ParamVector) -> ParamVector {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + factor * b).collect())
    }

    /// Unit vector along `self`, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<ParamVector> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self.scaled(1.0 / n))
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &ParamVector) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        Self::new(data)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A deterministic differentiable objective `f: R^d -> R`.
///
/// Implementations receive slices of the correct length; dimension checks
/// happen in the free functions [`value`], [`gradient`] and [`hvp`].
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    fn grad(&self, x: &[f64]) -> Vec<f64>;

    /// Exact `∇²f(x)·v`, or `None` when no closed form is available.
    fn hess_vec(&self, _x: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn has_analytic_hvp(&self) -> bool {
        false
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (**self).grad(x)
    }
    fn hess_vec(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        (**self).hess_vec(x, v)
    }
    fn has_analytic_hvp(&self) -> bool {
        (**self).has_analytic_hvp()
    }
}

impl<T: Objective + ?Sized> Objective for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (**self).grad(x)
    }
    fn hess_vec(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        (**self).hess_vec(x, v)
    }
    fn has_analytic_hvp(&self) -> bool {
        (**self).has_analytic_hvp()
    }
}

impl<T: Objective + ?Sized> Objective for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (**self).grad(x)
    }
    fn hess_vec(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        (**self).hess_vec(x, v)
    }
    fn has_analytic_hvp(&self) -> bool {
        (**self).has_analytic_hvp()
    }
}

/// How Hessian-vector products are computed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HvpMethod {
    /// Analytic when the objective supports it, central differences otherwise.
    #[default]
    Auto,
    Analytic,
    /// `(∇f(x+hv) − ∇f(x−hv)) / 2h`. With `step: None` the step is
    /// `1e-5 · (1 + ‖x‖) / ‖v‖`.
    CentralDifference { step: Option<f64> },
}

impl HvpMethod {
    pub fn central(step: f64) -> Result<Self> {
        if step > 0.0 && step.is_finite() {
            Ok(HvpMethod::CentralDifference { step: Some(step) })
        } else {
            Err(Error::InvalidParameter(format!(
                "central-difference step must be positive, got {step}"
            )))
        }
    }
}

pub const DEFAULT_HVP_RELATIVE_STEP: f64 = 1e-5;

pub fn default_hvp_step(x: &[f64], v: &[f64]) -> f64 {
    DEFAULT_HVP_RELATIVE_STEP * (1.0 + norm(x)) / norm(v)
}

pub fn value<O: Objective + ?Sized>(obj: &O, x: &[f64]) -> Result<f64> {
    check_dim(obj.dim(), x.len())?;
    let f = obj.eval(x);
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::NumericOverflow(format!("objective value is {f}")))
    }
}

pub fn gradient<O: Objective + ?Sized>(obj: &O, x: &[f64]) -> Result<ParamVector> {
    check_dim(obj.dim(), x.len())?;
    let g = obj.grad(x);
    check_dim(obj.dim(), g.len())?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow("non-finite gradient".into()));
    }
    Ok(ParamVector::from_raw(g))
}

pub fn hvp<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    v: &[f64],
    method: HvpMethod,
) -> Result<ParamVector> {
    let d = obj.dim();
    check_dim(d, x.len())?;
    check_dim(d, v.len())?;
    if v.iter().all(|&vi| vi == 0.0) {
        return Ok(ParamVector::zeros(d));
    }
    let method = match method {
        HvpMethod::Auto if obj.has_analytic_hvp() => HvpMethod::Analytic,
        HvpMethod::Auto => HvpMethod::CentralDifference { step: None },
        m => m,
    };
    let out = match method {
        HvpMethod::Analytic => obj.hess_vec(x, v).ok_or_else(|| {
            Error::UnsupportedMethod("objective has no closed-form Hessian".into())
        })?,
        HvpMethod::CentralDifference { step } => {
            let h = match step {
                Some(h) if h > 0.0 && h.is_finite() => h,
                Some(h) => {
                    return Err(Error::InvalidParameter(format!(
                        "central-difference step must be positive, got {h}"
                    )))
                }
                None => default_hvp_step(x, v),
            };
            central_difference_hvp(obj, x, v, h)
        }
        HvpMethod::Auto => unreachable!(),
    };
    check_dim(d, out.len())?;
    if out.iter().any(|o| !o.is_finite()) {
        return Err(Error::NumericOverflow("non-finite Hessian-vector product".into()));
    }
    Ok(ParamVector::from_raw(out))
}

fn central_difference_hvp<O: Objective + ?Sized>(obj: &O, x: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    let plus: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi + h * vi).collect();
    let minus: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi - h * vi).collect();
    let gp = obj.grad(&plus);
    let gm = obj.grad(&minus);
    gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}
