//! Product-of-categoricals latent: K independent groups with C classes each,
//! parameterized by logits.

use crate::math::{DenseArray, MathError, Real, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalLatent {
    logits: DenseArray,
}

impl CategoricalLatent {
    pub fn new(logits: DenseArray) -> Self {
        assert_eq!(logits.shape().len(), 2, "logits must be K×C");
        assert!(logits.rows() >= 1 && logits.cols() >= 1);
        Self { logits }
    }

    pub fn from_probs(groups: usize, classes: usize, probs: &[Real]) -> Self {
        assert_eq!(probs.len(), groups * classes);
        let logits = probs.iter().map(|&p| p.ln()).collect();
        Self::new(DenseArray::matrix(groups, classes, logits))
    }

    pub fn uniform(groups: usize, classes: usize) -> Self {
        Self::new(DenseArray::zeros(vec![groups, classes]))
    }

    pub fn groups(&self) -> usize {
        self.logits.rows()
    }

    pub fn classes(&self) -> usize {
        self.logits.cols()
    }

    pub fn logits(&self) -> &DenseArray {
        &self.logits
    }

    /// Per-group softmax probabilities; each row sums to 1.
    pub fn probs(&self) -> DenseArray {
        let (k, c) = (self.groups(), self.classes());
        let mut out = vec![0.0; k * c];
        for g in 0..k {
            let row = self.logits.row(g);
            let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
            let mut sum = 0.0;
            for (j, &l) in row.iter().enumerate() {
                let e = (l - max).exp();
                out[g * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                out[g * c + j] /= sum;
            }
        }
        DenseArray::matrix(k, c, out)
    }

    /// Exact one-hot sample per group, flattened row-major K×C.
    pub fn sample_one_hot(&self, rng: &mut RngStream) -> Vec<Real> {
        let probs = self.probs();
        let (k, c) = (self.groups(), self.classes());
        let mut out = vec![0.0; k * c];
        for g in 0..k {
            let u = rng.uniform();
            let row = probs.row(g);
            let mut acc = 0.0;
            let mut chosen = c - 1;
            for (j, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = j;
                    break;
                }
            }
            out[g * c + chosen] = 1.0;
        }
        out
    }

    /// One-hot of the per-group argmax (ties to the lowest class index).
    pub fn mode_one_hot(&self) -> Vec<Real> {
        let (k, c) = (self.groups(), self.classes());
        let mut out = vec![0.0; k * c];
        for g in 0..k {
            let row = self.logits.row(g);
            let mut best = 0;
            for j in 1..c {
                if row[j] > row[best] {
                    best = j;
                }
            }
            out[g * c + best] = 1.0;
        }
        out
    }
}

/// Sum over groups of the discrete `KL(p ‖ q)`.
pub fn kl_categorical(p: &CategoricalLatent, q: &CategoricalLatent) -> Result<Real, MathError> {
    if p.groups() != q.groups() || p.classes() != q.classes() {
        return Err(MathError::DimensionMismatch {
            left: p.groups() * p.classes(),
            right: q.groups() * q.classes(),
            context: "kl_categorical",
        });
    }
    let pp = p.probs();
    let qp = q.probs();
    let mut kl = 0.0;
    for (&pi, &qi) in pp.values().iter().zip(qp.values()) {
        if pi > 0.0 {
            kl += pi * (pi.ln() - qi.ln());
        }
    }
    Ok(kl.max(0.0))
}
