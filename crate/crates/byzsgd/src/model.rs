//! Loss models the workers optimize.
//!
//! Two problems are supported:
//!
//! * multinomial softmax regression on labeled feature vectors (the MNIST
//!   experiments), parameterized by a flattened `classes x (features + 1)`
//!   weight matrix whose last column multiplies a constant bias input of 1;
//! * a synthetic strongly convex quadratic, where each data point is a
//!   center `c` and the sample loss is `0.5 * ||w - c||^2`. This problem
//!   has curvature exactly 1 in every direction, which makes convergence
//!   rates easy to predict and test against closed-form bounds.
//!
//! Losses and gradients are always minibatch means, so batch order never
//! matters and single-sample gradients average to the full-shard gradient.

use ndarray::{Array2, ArrayView2};

use crate::data::Shard;
use crate::error::{Error, Result};

/// A model parameter vector of fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dist_sq(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| {
                let d = a - b;
                d * d
            })
            .sum()
    }

    pub fn dist(&self, other: &Self) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// `self += other`, used when accumulating parameter averages.
    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.0 {
            *a *= c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl std::ops::Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Precomputed design matrix for fast repeated accuracy evaluation.
///
/// Rows are feature vectors with the bias input appended, so computing all
/// logits for one parameter vector is a single matrix product.
pub struct EvalMatrix {
    x: Array2<f64>,
    labels: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Softmax regression with `classes * (features + 1)` parameters.
    Softmax { classes: usize, features: usize },
    /// `0.5 * ||w - c||^2` averaged over centers `c`, in `dim` dimensions.
    Quadratic { dim: usize },
}

impl Model {
    pub fn dim(&self) -> usize {
        match *self {
            Model::Softmax { classes, features } => classes * (features + 1),
            Model::Quadratic { dim } => dim,
        }
    }

    /// Minibatch loss at `w`. `batch` holds indices into `shard`.
    pub fn loss(&self, w: &ParamVector, shard: &Shard, batch: &[usize]) -> f64 {
        assert!(!batch.is_empty(), "empty minibatch");
        assert_eq!(w.dim(), self.dim(), "parameter dimension mismatch");
        match (*self, shard) {
            (Model::Softmax { classes, features }, Shard::Labeled(samples)) => {
                let mut total = 0.0;
                let mut logits = vec![0.0; classes];
                for &s in batch {
                    let sample = &samples[s];
                    self.logits_into(w, &sample.features, &mut logits);
                    let _ = features;
                    total += log_sum_exp(&logits) - logits[sample.label as usize];
                }
                total / batch.len() as f64
            }
            (Model::Quadratic { .. }, Shard::Centers(centers)) => {
                let mut total = 0.0;
                for &s in batch {
                    let c = &centers[s];
                    total += 0.5
                        * w.0
                            .iter()
                            .zip(c)
                            .map(|(a, b)| {
                                let d = a - b;
                                d * d
                            })
                            .sum::<f64>();
                }
                total / batch.len() as f64
            }
            _ => panic!("shard kind does not match model"),
        }
    }

    /// Minibatch gradient at `w`. `batch` holds indices into `shard`.
    pub fn gradient(&self, w: &ParamVector, shard: &Shard, batch: &[usize]) -> ParamVector {
        assert!(!batch.is_empty(), "empty minibatch");
        assert_eq!(w.dim(), self.dim(), "parameter dimension mismatch");
        match (*self, shard) {
            (Model::Softmax { classes, features }, Shard::Labeled(samples)) => {
                let cols = features + 1;
                let mut g = ParamVector::zeros(self.dim());
                let mut logits = vec![0.0; classes];
                for &s in batch {
                    let sample = &samples[s];
                    self.logits_into(w, &sample.features, &mut logits);
                    softmax_in_place(&mut logits);
                    logits[sample.label as usize] -= 1.0;
                    // logits now holds (p - y); accumulate its outer product
                    // with the biased input row.
                    for (c, &coeff) in logits.iter().enumerate() {
                        let row = &mut g.0[c * cols..(c + 1) * cols];
                        for (f, &x) in sample.features.iter().enumerate() {
                            row[f] += coeff * x as f64;
                        }
                        row[features] += coeff;
                    }
                }
                g.scale(1.0 / batch.len() as f64);
                g
            }
            (Model::Quadratic { .. }, Shard::Centers(centers)) => {
                // Gradient of the batch mean of 0.5||w - c||^2 is w minus
                // the batch mean center.
                let mut g = w.clone();
                let inv = 1.0 / batch.len() as f64;
                for &s in batch {
                    for (gi, ci) in g.0.iter_mut().zip(&centers[s]) {
                        *gi -= ci * inv;
                    }
                }
                g
            }
            _ => panic!("shard kind does not match model"),
        }
    }

    /// Minibatch gradients at every candidate parameter, on one shared
    /// batch. Equivalent to calling [`Model::gradient`] per candidate;
    /// for softmax the whole set is computed from two stacked matrix
    /// products (one for all logits, one turning all error rows back
    /// into gradients), which is what makes gradient-scoring rules
    /// affordable at full parameter dimension.
    pub fn batch_gradients(
        &self,
        candidates: &[&ParamVector],
        shard: &Shard,
        batch: &[usize],
    ) -> Vec<ParamVector> {
        assert!(!batch.is_empty(), "empty minibatch");
        match (*self, shard) {
            (Model::Softmax { classes, features }, Shard::Labeled(samples)) => {
                let cols = features + 1;
                let b = batch.len();
                let k = candidates.len();
                let mut stacked = Vec::with_capacity(k * classes * cols);
                for w in candidates {
                    assert_eq!(w.dim(), self.dim(), "parameter dimension mismatch");
                    stacked.extend_from_slice(w);
                }
                let stacked =
                    Array2::from_shape_vec((k * classes, cols), stacked).expect("shape");
                let mut xt = Vec::with_capacity(b * cols);
                for &s in batch {
                    xt.extend(samples[s].features.iter().map(|&v| v as f64));
                    xt.push(1.0);
                }
                let x = Array2::from_shape_vec((b, cols), xt).expect("shape");
                let logits = stacked.dot(&x.t()); // (k * classes, b)

                // Convert every candidate's logit column to (softmax - y)
                // in place, then one product with the batch rows yields
                // every gradient at once.
                let mut errs = logits;
                let inv_b = 1.0 / b as f64;
                let mut p = vec![0.0; classes];
                for j in 0..k {
                    let base = j * classes;
                    for (s_pos, &s) in batch.iter().enumerate() {
                        for c in 0..classes {
                            p[c] = errs[(base + c, s_pos)];
                        }
                        softmax_in_place(&mut p);
                        p[samples[s].label as usize] -= 1.0;
                        for c in 0..classes {
                            errs[(base + c, s_pos)] = p[c] * inv_b;
                        }
                    }
                }
                let grads = errs.dot(&x); // (k * classes, cols)
                let flat: Vec<f64> = grads.into_iter().collect();
                flat.chunks_exact(classes * cols)
                    .map(|chunk| ParamVector(chunk.to_vec()))
                    .collect()
            }
            (Model::Quadratic { .. }, Shard::Centers(centers)) => {
                let inv = 1.0 / batch.len() as f64;
                let mut mean_c = vec![0.0; self.dim()];
                for &s in batch {
                    for (m, ci) in mean_c.iter_mut().zip(&centers[s]) {
                        *m += ci * inv;
                    }
                }
                candidates
                    .iter()
                    .map(|w| {
                        assert_eq!(w.dim(), self.dim(), "parameter dimension mismatch");
                        let mut g = (*w).clone();
                        for (gi, m) in g.0.iter_mut().zip(&mean_c) {
                            *gi -= m;
                        }
                        g
                    })
                    .collect()
            }
            _ => panic!("shard kind does not match model"),
        }
    }

    /// For every candidate parameter vector `w_j`, the inner product
    /// `<grad_batch(w_j), w_own - w_j>`.
    ///
    /// This is the quantity the descent-direction acceptance rule needs.
    /// For softmax it is computed from one stacked logit product rather
    /// than materializing a gradient per candidate; for the quadratic the
    /// gradient has a closed form.
    pub fn grad_inner_products(
        &self,
        w_own: &ParamVector,
        candidates: &[&ParamVector],
        shard: &Shard,
        batch: &[usize],
    ) -> Vec<f64> {
        assert!(!batch.is_empty(), "empty minibatch");
        match (*self, shard) {
            (Model::Softmax { classes, features }, Shard::Labeled(samples)) => {
                let cols = features + 1;
                let b = batch.len();
                let k = candidates.len();
                // Stack own + candidates into one (k + 1) * classes row
                // matrix; one product against the batch gives every logit
                // needed, and (own - candidate) logits give the directional
                // terms without forming any gradient.
                let mut stacked = Vec::with_capacity((k + 1) * classes * cols);
                stacked.extend_from_slice(w_own);
                for w in candidates {
                    assert_eq!(w.dim(), self.dim(), "parameter dimension mismatch");
                    stacked.extend_from_slice(w);
                }
                let stacked =
                    Array2::from_shape_vec(((k + 1) * classes, cols), stacked).expect("shape");
                let mut xt = Vec::with_capacity(cols * b);
                for &s in batch {
                    xt.extend(samples[s].features.iter().map(|&v| v as f64));
                    xt.push(1.0);
                }
                let x = Array2::from_shape_vec((b, cols), xt).expect("shape");
                let logits = stacked.dot(&x.t()); // ((k + 1) * classes, b)

                let mut out = Vec::with_capacity(k);
                let mut p = vec![0.0; classes];
                for j in 0..k {
                    let base = (j + 1) * classes;
                    let mut acc = 0.0;
                    for (s_pos, &s) in batch.iter().enumerate() {
                        for c in 0..classes {
                            p[c] = logits[(base + c, s_pos)];
                        }
                        softmax_in_place(&mut p);
                        let y = samples[s].label as usize;
                        p[y] -= 1.0;
                        for c in 0..classes {
                            let diff = logits[(c, s_pos)] - logits[(base + c, s_pos)];
                            acc += p[c] * diff;
                        }
                    }
                    out.push(acc / b as f64);
                }
                out
            }
            (Model::Quadratic { .. }, Shard::Centers(centers)) => {
                let mut mean_c = vec![0.0; self.dim()];
                let inv = 1.0 / batch.len() as f64;
                for &s in batch {
                    for (m, c) in mean_c.iter_mut().zip(&centers[s]) {
                        *m += c * inv;
                    }
                }
                candidates
                    .iter()
                    .map(|w| {
                        w.0.iter()
                            .zip(&mean_c)
                            .zip(w_own.iter())
                            .map(|((wj, cm), own)| (wj - cm) * (own - wj))
                            .sum()
                    })
                    .collect()
            }
            _ => panic!("shard kind does not match model"),
        }
    }

    /// Classification accuracy of `w` on labeled samples. Ties in the
    /// argmax resolve to the lowest class index.
    pub fn predict_accuracy(&self, w: &ParamVector, samples: &[crate::data::Sample]) -> Result<f64> {
        match *self {
            Model::Softmax { .. } => {
                let eval = self.eval_matrix(samples)?;
                Ok(self.accuracy_on(w, &eval))
            }
            Model::Quadratic { .. } => Err(Error::Unsupported(
                "classification accuracy is undefined for the quadratic problem".into(),
            )),
        }
    }

    /// Build the reusable design matrix for `accuracy_on`.
    pub fn eval_matrix(&self, samples: &[crate::data::Sample]) -> Result<EvalMatrix> {
        let (classes, features) = match *self {
            Model::Softmax { classes, features } => (classes, features),
            Model::Quadratic { .. } => {
                return Err(Error::Unsupported(
                    "no design matrix for the quadratic problem".into(),
                ))
            }
        };
        let cols = features + 1;
        let mut flat = Vec::with_capacity(samples.len() * cols);
        let mut labels = Vec::with_capacity(samples.len());
        for sample in samples {
            assert_eq!(sample.features.len(), features, "sample dimension mismatch");
            assert!((sample.label as usize) < classes, "label out of range");
            flat.extend(sample.features.iter().map(|&v| v as f64));
            flat.push(1.0);
            labels.push(sample.label);
        }
        let x = Array2::from_shape_vec((samples.len(), cols), flat).expect("shape");
        Ok(EvalMatrix { x, labels })
    }

    /// Accuracy of `w` against a prebuilt design matrix.
    pub fn accuracy_on(&self, w: &ParamVector, eval: &EvalMatrix) -> f64 {
        let (classes, features) = match *self {
            Model::Softmax { classes, features } => (classes, features),
            Model::Quadratic { .. } => unreachable!("eval_matrix rejects quadratic"),
        };
        assert_eq!(w.dim(), self.dim(), "parameter dimension mismatch");
        let w_mat = ArrayView2::from_shape((classes, features + 1), w).expect("shape");
        let logits = eval.x.dot(&w_mat.t()); // (n, classes)
        let mut correct = 0usize;
        for (row, &label) in logits.rows().into_iter().zip(&eval.labels) {
            let mut best = 0usize;
            let mut best_v = row[0];
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > best_v {
                    best = c;
                    best_v = v;
                }
            }
            if best == label as usize {
                correct += 1;
            }
        }
        correct as f64 / eval.labels.len() as f64
    }

    fn logits_into(&self, w: &ParamVector, features: &[f32], out: &mut [f64]) {
        let (classes, nfeat) = match *self {
            Model::Softmax { classes, features } => (classes, features),
            Model::Quadratic { .. } => unreachable!(),
        };
        assert_eq!(features.len(), nfeat, "sample dimension mismatch");
        let cols = nfeat + 1;
        for c in 0..classes {
            let row = &w.0[c * cols..(c + 1) * cols];
            let mut acc = row[nfeat]; // bias
            for (f, &x) in features.iter().enumerate() {
                acc += row[f] * x as f64;
            }
            out[c] = acc;
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Replace logits with softmax probabilities, numerically stably.
fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}
