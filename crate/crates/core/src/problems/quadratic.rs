use crate::diffcore::{dot, Objective};
use crate::error::{Error, Result};

/// `f(x) = Σ a_i x_i²` with positive curvatures `a_i`.
///
/// The Hessian is the constant `2·diag(a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagQuadratic {
    diag: Vec<f64>,
}

impl DiagQuadratic {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidDimension("diagonal quadratic needs d ≥ 1".into()));
        }
        if let Some(a) = diag.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "curvatures must be positive and finite, got {a}"
            )));
        }
        Ok(Self { diag })
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Diagonal of the Hessian, `2·a`.
    pub fn hessian_diag(&self) -> Vec<f64> {
        self.diag.iter().map(|a| 2.0 * a).collect()
    }

    pub fn spectral_norm(&self) -> f64 {
        2.0 * self.diag.iter().cloned().fold(f64::MIN, f64::max)
    }
}

impl Objective for DiagQuadratic {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.diag.iter().zip(x).map(|(a, xi)| a * xi * xi).sum()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(x).map(|(a, xi)| 2.0 * a * xi).collect()
    }

    fn hess_vec(&self, _x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(self.diag.iter().zip(v).map(|(a, vi)| 2.0 * a * vi).collect())
    }

    fn has_analytic_hvp(&self) -> bool {
        true
    }
}

/// The motivating ill-conditioned quadratic: `a = (100, 1, …, 1)`.
pub fn make_intro_quadratic(d: usize) -> Result<DiagQuadratic> {
    if d < 2 {
        return Err(Error::InvalidDimension(format!("intro quadratic needs d ≥ 2, got {d}")));
    }
    let mut diag = vec![1.0; d];
    diag[0] = 100.0;
    DiagQuadratic::new(diag)
}

/// `f(x) = xᵀAx` for a dense symmetric `A` (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQuadratic {
    dim: usize,
    a: Vec<f64>,
}

impl DenseQuadratic {
    pub fn new(dim: usize, a: Vec<f64>) -> Result<Self> {
        if dim == 0 || a.len() != dim * dim {
            return Err(Error::InvalidDimension(format!(
                "expected {dim}x{dim} matrix, got {} entries",
                a.len()
            )));
        }
        for i in 0..dim {
            for j in 0..i {
                let (aij, aji) = (a[i * dim + j], a[j * dim + i]);
                if aij != aji {
                    return Err(Error::InvalidParameter(format!(
                        "matrix not symmetric at ({i},{j}): {aij} vs {aji}"
                    )));
                }
            }
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
        }
        Ok(Self { dim, a })
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        self.a.chunks(self.dim).map(|row| dot(row, v)).collect()
    }
}

impl Objective for DenseQuadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        dot(x, &self.mat_vec(x))
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.mat_vec(x).into_iter().map(|v| 2.0 * v).collect()
    }

    fn hess_vec(&self, _x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(self.mat_vec(v).into_iter().map(|w| 2.0 * w).collect())
    }

    fn has_analytic_hvp(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{gradient, hvp, value, HvpMethod};

    #[test]
    fn intro_quadratic_values() {
        let q = make_intro_quadratic(3).unwrap();
        assert_eq!(q.diag(), &[100.0, 1.0, 1.0]);
        assert_eq!(value(&q, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(value(&q, &[1.0, 1.0, 1.0]).unwrap(), 102.0);
        assert_eq!(value(&q, &[1.0, 0.0, 0.0]).unwrap(), 100.0);
        assert_eq!(gradient(&q, &[1.0, 1.0, 1.0]).unwrap().as_slice(), &[200.0, 2.0, 2.0]);
        assert_eq!(gradient(&q, &[0.0; 3]).unwrap().as_slice(), &[0.0; 3]);
        assert_eq!(q.spectral_norm(), 200.0);
        let hv = hvp(&q, &[0.3, -2.0, 5.0], &[1.0, 0.0, 0.0], HvpMethod::Analytic).unwrap();
        assert_eq!(hv.as_slice(), &[200.0, 0.0, 0.0]);
    }

    #[test]
    fn intro_quadratic_d2_gradient() {
        let q = make_intro_quadratic(2).unwrap();
        assert_eq!(gradient(&q, &[1.0, 1.0]).unwrap().as_slice(), &[200.0, 2.0]);
    }

    #[test]
    fn intro_quadratic_rejects_small_dimension() {
        assert!(matches!(make_intro_quadratic(1), Err(Error::InvalidDimension(_))));
        assert!(matches!(make_intro_quadratic(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn dense_quadratic_gradient_matches_finite_differences() {
        let a = vec![3.0, 0.5, -1.0, 0.5, 2.0, 0.25, -1.0, 0.25, 4.0];
        let q = DenseQuadratic::new(3, a).unwrap();
        let x = [0.3, -1.2, 0.7];
        let g = gradient(&q, &x).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (q.eval(&xp) - q.eval(&xm)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn dense_quadratic_rejects_asymmetric() {
        assert!(DenseQuadratic::new(2, vec![1.0, 2.0, 3.0, 1.0]).is_err());
        assert!(DenseQuadratic::new(2, vec![1.0, 2.0, 2.0]).is_err());
    }

    #[test]
    fn diag_quadratic_rejects_non_positive() {
        assert!(DiagQuadratic::new(vec![1.0, 0.0]).is_err());
        assert!(DiagQuadratic::new(vec![]).is_err());
    }
}
