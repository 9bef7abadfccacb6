//! One-hidden-layer tanh classifier with softmax cross-entropy.
//!
//! Parameters are flattened as `[W1 (hidden×d_in), b1 (hidden), W2 (k×hidden), b2 (k)]`,
//! row-major. The Hessian-vector product is the exact R-operator of the
//! backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffcore::{dot, Objective, ParamVector};
use crate::error::{Error, Result};
use crate::optim::GroupLayout;

pub const DEFAULT_SEPARATION: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    d_in: usize,
    hidden: usize,
    classes: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
    initial: ParamVector,
}

/// Construction parameters for [`MlpClassifier`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub d_in: usize,
    pub hidden: usize,
    pub samples: usize,
    pub classes: usize,
    /// Distance between class means.
    pub separation: f64,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(d_in: usize, hidden: usize, samples: usize, seed: u64) -> Self {
        Self { d_in, hidden, samples, classes: 2, separation: DEFAULT_SEPARATION, seed }
    }

    pub fn build(&self) -> Result<MlpClassifier> {
        if self.d_in == 0 || self.hidden == 0 || self.samples == 0 {
            return Err(Error::InvalidParameter(
                "mlp input width, hidden width and sample count must be positive".into(),
            ));
        }
        if self.classes < 2 {
            return Err(Error::InvalidParameter("mlp needs at least two classes".into()));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cluster separation must be finite and non-negative, got {}",
                self.separation
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let means = cluster_means(&mut rng, self.d_in, self.classes, self.separation);

        let mut inputs = Vec::with_capacity(self.samples * self.d_in);
        let mut labels = Vec::with_capacity(self.samples);
        for i in 0..self.samples {
            let label = i % self.classes;
            for mean in &means[label] {
                let noise: f64 = StandardNormal.sample(&mut rng);
                inputs.push(mean + noise);
            }
            labels.push(label);
        }

        let (h, d, k) = (self.hidden, self.d_in, self.classes);
        let mut weights = Vec::with_capacity(h * d + h + k * h + k);
        let s1 = 1.0 / (d as f64).sqrt();
        weights.extend((0..h * d).map(|_| s1 * rng.sample::<f64, _>(StandardNormal)));
        weights.extend(std::iter::repeat_n(0.0, h));
        let s2 = 1.0 / (h as f64).sqrt();
        weights.extend((0..k * h).map(|_| s2 * rng.sample::<f64, _>(StandardNormal)));
        weights.extend(std::iter::repeat_n(0.0, k));

        Ok(MlpClassifier {
            d_in: d,
            hidden: h,
            classes: k,
            inputs,
            labels,
            initial: ParamVector::from_raw(weights),
        })
    }
}

fn cluster_means(rng: &mut ChaCha8Rng, d: usize, k: usize, separation: f64) -> Vec<Vec<f64>> {
    let mut unit = || {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let n = dot(&v, &v).sqrt().max(f64::MIN_POSITIVE);
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let half = separation / 2.0;
    if k == 2 {
        let u = unit();
        vec![u.iter().map(|x| -half * x).collect(), u.iter().map(|x| half * x).collect()]
    } else {
        (0..k).map(|_| unit().into_iter().map(|x| half * x).collect()).collect()
    }
}

/// Two-class classifier on seeded Gaussian clusters.
pub fn make_mlp(d_in: usize, hidden: usize, n: usize, seed: u64) -> Result<MlpClassifier> {
    MlpSpec::new(d_in, hidden, n, seed).build()
}

struct Weights<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
}

struct Forward {
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl MlpClassifier {
    pub fn input_dim(&self) -> usize {
        self.d_in
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.d_in + self.hidden + self.classes * self.hidden + self.classes
    }

    pub fn initial_weights(&self) -> &ParamVector {
        &self.initial
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d_in..(i + 1) * self.d_in]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// `W1`, `b1`, `W2`, `b2` as parameter groups.
    pub fn layout(&self) -> GroupLayout {
        GroupLayout::builder()
            .matrix("w1", self.hidden, self.d_in)
            .vector("b1", self.hidden)
            .matrix("w2", self.classes, self.hidden)
            .vector("b2", self.classes)
            .build()
    }

    fn split<'a>(&self, p: &'a [f64]) -> Weights<'a> {
        let (h, d, k) = (self.hidden, self.d_in, self.classes);
        let (w1, rest) = p.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(k * h);
        Weights { w1, b1, w2, b2 }
    }

    fn forward(&self, w: &Weights<'_>, x: &[f64]) -> Forward {
        let hidden: Vec<f64> = w
            .w1
            .chunks(self.d_in)
            .zip(w.b1)
            .map(|(row, b)| (dot(row, x) + b).tanh())
            .collect();
        let logits = w.w2.chunks(self.hidden).zip(w.b2).map(|(row, b)| dot(row, &hidden) + b).collect();
        Forward { hidden, logits }
    }

    /// Logits of sample `i` under parameters `params`.
    pub fn logits(&self, params: &[f64], i: usize) -> Vec<f64> {
        self.forward(&self.split(params), self.input(i)).logits
    }

    /// `J_iᵀ·w`: gradient of `w·logits(x_i)` with respect to the parameters.
    pub fn logit_vjp(&self, params: &[f64], i: usize, w: &[f64]) -> Vec<f64> {
        let weights = self.split(params);
        let x = self.input(i);
        let fwd = self.forward(&weights, x);
        let mut out = vec![0.0; self.param_count()];
        self.backward_into(&weights, x, &fwd.hidden, w, 1.0, &mut out);
        out
    }

    /// Accumulates `scale · J(x)ᵀ·d_logits` into `out`.
    fn backward_into(
        &self,
        w: &Weights<'_>,
        x: &[f64],
        hidden: &[f64],
        d_logits: &[f64],
        scale: f64,
        out: &mut [f64],
    ) {
        let (h, d, k) = (self.hidden, self.d_in, self.classes);
        let (g_w1, rest) = out.split_at_mut(h * d);
        let (g_b1, rest) = rest.split_at_mut(h);
        let (g_w2, g_b2) = rest.split_at_mut(k * h);
        for c in 0..k {
            let dc = scale * d_logits[c];
            for j in 0..h {
                g_w2[c * h + j] += dc * hidden[j];
            }
            g_b2[c] += dc;
        }
        for j in 0..h {
            let dz: f64 = (0..k).map(|c| w.w2[c * h + j] * d_logits[c]).sum();
            let da = scale * dz * (1.0 - hidden[j] * hidden[j]);
            for (gi, xi) in g_w1[j * d..(j + 1) * d].iter_mut().zip(x) {
                *gi += da * xi;
            }
            g_b1[j] += da;
        }
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl Objective for MlpClassifier {
    fn dim(&self) -> usize {
        self.param_count()
    }

    fn eval(&self, p: &[f64]) -> f64 {
        let w = self.split(p);
        let total: f64 = (0..self.samples())
            .map(|i| {
                let fwd = self.forward(&w, self.input(i));
                log_sum_exp(&fwd.logits) - fwd.logits[self.labels[i]]
            })
            .sum();
        total / self.samples() as f64
    }

    fn grad(&self, p: &[f64]) -> Vec<f64> {
        let w = self.split(p);
        let scale = 1.0 / self.samples() as f64;
        let mut out = vec![0.0; self.param_count()];
        for i in 0..self.samples() {
            let x = self.input(i);
            let fwd = self.forward(&w, x);
            let mut d_logits = softmax(&fwd.logits);
            d_logits[self.labels[i]] -= 1.0;
            self.backward_into(&w, x, &fwd.hidden, &d_logits, scale, &mut out);
        }
        out
    }

    fn hess_vec(&self, p: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let (h, d, k) = (self.hidden, self.d_in, self.classes);
        let w = self.split(p);
        let dv = self.split(v);
        let scale = 1.0 / self.samples() as f64;
        let mut out = vec![0.0; self.param_count()];
        let (r_w1, rest) = out.split_at_mut(h * d);
        let (r_b1, rest) = rest.split_at_mut(h);
        let (r_w2, r_b2) = rest.split_at_mut(k * h);

        for i in 0..self.samples() {
            let x = self.input(i);
            let fwd = self.forward(&w, x);
            let z = &fwd.hidden;
            let slope: Vec<f64> = z.iter().map(|zj| 1.0 - zj * zj).collect();

            // Forward R-pass.
            let r_z: Vec<f64> = (0..h)
                .map(|j| slope[j] * (dot(&dv.w1[j * d..(j + 1) * d], x) + dv.b1[j]))
                .collect();
            let r_logits: Vec<f64> = (0..k)
                .map(|c| {
                    dot(&dv.w2[c * h..(c + 1) * h], z) + dot(&w.w2[c * h..(c + 1) * h], &r_z) + dv.b2[c]
                })
                .collect();

            let probs = softmax(&fwd.logits);
            let mut d_logits = probs.clone();
            d_logits[self.labels[i]] -= 1.0;
            let mean_r = dot(&probs, &r_logits);
            let r_d_logits: Vec<f64> = (0..k).map(|c| probs[c] * (r_logits[c] - mean_r)).collect();

            // Backward R-pass.
            for c in 0..k {
                for j in 0..h {
                    r_w2[c * h + j] += scale * (r_d_logits[c] * z[j] + d_logits[c] * r_z[j]);
                }
                r_b2[c] += scale * r_d_logits[c];
            }
            for j in 0..h {
                let dz: f64 = (0..k).map(|c| w.w2[c * h + j] * d_logits[c]).sum();
                let r_dz: f64 = (0..k)
                    .map(|c| dv.w2[c * h + j] * d_logits[c] + w.w2[c * h + j] * r_d_logits[c])
                    .sum();
                let r_da = r_dz * slope[j] - 2.0 * dz * z[j] * r_z[j];
                for (ri, xi) in r_w1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *ri += scale * r_da * xi;
                }
                r_b1[j] += scale * r_da;
            }
        }
        Some(out)
    }

    fn has_analytic_hvp(&self) -> bool {
        true
    }
}

/// Draws a point near the initial weights, for tests and probes.
pub fn perturbed_weights(mlp: &MlpClassifier, scale: f64, rng: &mut impl Rng) -> ParamVector {
    let data = mlp
        .initial_weights()
        .iter()
        .map(|w| w + scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ParamVector::from_raw(data)
}
