//! Gauss-Newton smoothness analysis for the two-class MLP.
//!
//! For binary cross-entropy the logit Hessian is rank one,
//! `∇²ℓ(z) = c(z)²·[[1, −1], [−1, 1]]`, so each batch item contributes one
//! column `g_i = J_iᵀ·c(z_i)·(−1, 1)` and the Hessian approximation is
//! `(1/|S|)·G·Gᵀ`. Its spectral norm is computed on the small `|S|×|S|` Gram
//! matrix `GᵀG`, keeping the `1/|S|` factor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::diffcore::{dot, norm};
use crate::error::{check_dim, Error, Result};
use crate::problems::MlpClassifier;

pub const DEFAULT_REMOVAL_MULTIPLIER: f64 = 4.0;
pub const POWER_TOLERANCE: f64 = 1e-8;
pub const POWER_MAX_ITERATIONS: usize = 10_000;
const POWER_SEED: u64 = 0x6A09_E667;

/// `c(z) = √(e^{z₁}e^{z₂}) / (e^{z₁} + e^{z₂})`, evaluated after subtracting
/// `max(z₁, z₂)`.
pub fn loss_hessian_sqrt_coeff(z: [f64; 2]) -> f64 {
    let m = z[0].max(z[1]);
    let (a, b) = (z[0] - m, z[1] - m);
    (0.5 * (a + b)).exp() / (a.exp() + b.exp())
}

/// Gauss-Newton factor `G` stored column by column (`p` rows, `|S|` columns).
#[derive(Debug, Clone, PartialEq)]
pub struct GnColumns {
    rows: usize,
    data: Vec<f64>,
}

impl GnColumns {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.is_empty() || rows == 0 {
            return Err(Error::InvalidParameter("Gauss-Newton factor must be nonempty".into()));
        }
        for c in &columns {
            check_dim(rows, c.len())?;
        }
        Ok(Self { rows, data: columns.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn batch_size(&self) -> usize {
        self.data.len() / self.rows
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.rows..(i + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.rows)
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    pub fn row_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.rows];
        for c in self.columns() {
            for (s, v) in sq.iter_mut().zip(c) {
                *s += v * v;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    /// `GᵀG`, row-major `|S|×|S|`.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.batch_size();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = dot(self.column(i), self.column(j));
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }

    /// Copy keeping only the rows for which `keep` is true.
    pub fn select_rows(&self, keep: &[bool]) -> Result<Self> {
        check_dim(self.rows, keep.len())?;
        let rows = keep.iter().filter(|&&k| k).count();
        if rows == 0 {
            return Err(Error::DegenerateRemoval("no rows left".into()));
        }
        let data = self
            .columns()
            .flat_map(|c| c.iter().zip(keep).filter(|(_, &k)| k).map(|(v, _)| *v))
            .collect();
        Ok(Self { rows, data })
    }

    /// `‖(1/|S|)·G·Gᵀ‖₂` by power iteration on the `p×p` side. Used to
    /// cross-check [`spectral_norm`].
    pub fn outer_spectral_norm(&self) -> f64 {
        let n = self.batch_size();
        let apply = |v: &[f64]| {
            let coeffs: Vec<f64> = self.columns().map(|c| dot(c, v)).collect();
            let mut out = vec![0.0; self.rows];
            for (c, a) in self.columns().zip(coeffs) {
                for (o, ci) in out.iter_mut().zip(c) {
                    *o += a * ci;
                }
            }
            out
        };
        power_iteration(self.rows, apply) / n as f64
    }
}

/// Columns `g_i = J_iᵀ·c(z_i)·(−1, 1)` for the batch items.
pub fn gn_columns(model: &MlpClassifier, params: &[f64], batch: &[usize]) -> Result<GnColumns> {
    if model.classes() != 2 {
        return Err(Error::UnsupportedModel(format!(
            "Gauss-Newton factorization needs a two-class head, got {} classes",
            model.classes()
        )));
    }
    check_dim(model.param_count(), params.len())?;
    if batch.is_empty() {
        return Err(Error::InvalidParameter("batch is empty".into()));
    }
    if let Some(&i) = batch.iter().find(|&&i| i >= model.samples()) {
        return Err(Error::InvalidParameter(format!(
            "batch index {i} out of range for {} samples",
            model.samples()
        )));
    }
    let columns = batch
        .par_iter()
        .map(|&i| {
            let z = model.logits(params, i);
            let c = loss_hessian_sqrt_coeff([z[0], z[1]]);
            model.logit_vjp(params, i, &[-c, c])
        })
        .collect();
    GnColumns::from_columns(columns)
}

/// `(1/|S|)·λ_max(GᵀG)`, the spectral norm of the Hessian approximation.
pub fn spectral_norm(g: &GnColumns) -> f64 {
    let n = g.batch_size();
    let k = g.gram();
    let apply = |v: &[f64]| k.chunks(n).map(|row| dot(row, v)).collect::<Vec<f64>>();
    power_iteration(n, apply) / n as f64
}

/// Largest eigenvalue of a symmetric PSD operator. Stops once
/// `‖Av − λv‖ ≤ tol·λ`.
fn power_iteration(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERATIONS {
        let w = apply(&v);
        lambda = dot(&v, &w);
        let wn = norm(&w);
        if wn == 0.0 {
            return 0.0;
        }
        let residual = norm(&w.iter().zip(&v).map(|(wi, vi)| wi - lambda * vi).collect::<Vec<_>>());
        if residual <= POWER_TOLERANCE * lambda.abs() {
            return lambda;
        }
        v = w.into_iter().map(|x| x / wn).collect();
    }
    log::warn!("power iteration hit {POWER_MAX_ITERATIONS} iterations without converging");
    lambda
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemovalReport {
    /// Spectral norm before removal.
    pub l: f64,
    /// Spectral norm after removal.
    pub ell: f64,
    /// Fraction of rows removed.
    pub eps: f64,
    pub multiplier: f64,
    pub removed: Vec<usize>,
}

impl RemovalReport {
    pub fn ratio(&self) -> f64 {
        self.l / self.ell
    }
}

/// Drops every row whose norm is at least `multiplier` times the mean row
/// norm and reports the spectral norm before and after.
pub fn coordinate_removal(g: &GnColumns, multiplier: f64) -> Result<RemovalReport> {
    if !(multiplier > 0.0 && multiplier.is_finite()) {
        return Err(Error::InvalidParameter(format!("removal multiplier must be positive, got {multiplier}")));
    }
    let norms = g.row_norms();
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let cutoff = multiplier * mean;
    let keep: Vec<bool> = norms.iter().map(|&n| n < cutoff).collect();
    let removed: Vec<usize> = keep.iter().enumerate().filter(|(_, &k)| !k).map(|(i, _)| i).collect();
    if removed.len() == norms.len() {
        return Err(Error::DegenerateRemoval(format!(
            "every row norm is at least {multiplier} × mean {mean}"
        )));
    }
    let l = spectral_norm(g);
    let ell = if removed.is_empty() { l } else { spectral_norm(&g.select_rows(&keep)?) };
    Ok(RemovalReport { l, ell, eps: removed.len() as f64 / norms.len() as f64, multiplier, removed })
}
