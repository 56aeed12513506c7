//! Named parameter arrays with deterministic ordering, plus Adam.

use crate::math::{DenseArray, NodeId, Real, RngStream, Tape};
use std::collections::HashMap;

/// Ordered map from parameter name to array. Iteration follows insertion
/// order, which keeps gradient clipping, Adam updates, and checkpoints
/// deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<(String, DenseArray)>,
    index: HashMap<String, usize>,
}

/// Tape leaf ids for every parameter of a store, keyed by name.
pub struct Leaves {
    ids: HashMap<String, NodeId>,
}

impl Leaves {
    pub fn id(&self, name: &str) -> NodeId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("no leaf for parameter {name}"))
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: DenseArray) {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter {name}"
        );
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value));
    }

    /// Register a matrix initialized `N(0, 1/in_dim)`.
    pub fn insert_weight(
        &mut self,
        name: impl Into<String>,
        in_dim: usize,
        out_dim: usize,
        rng: &mut RngStream,
    ) {
        let scale = 1.0 / (in_dim as Real).sqrt();
        let values = (0..in_dim * out_dim)
            .map(|_| rng.standard_normal() * scale)
            .collect();
        self.insert(name, DenseArray::matrix(in_dim, out_dim, values));
    }

    pub fn insert_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) {
        self.insert(name, DenseArray::zeros(shape));
    }

    pub fn get(&self, name: &str) -> &DenseArray {
        let i = self.index[name];
        &self.entries[i].1
    }

    pub fn get_mut(&mut self, name: &str) -> &mut DenseArray {
        let i = self.index[name];
        &mut self.entries[i].1
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseArray)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.len()).sum()
    }

    /// Zero every array (used by tests that need symmetric-zero networks).
    pub fn zero_all(&mut self) {
        for (_, v) in &mut self.entries {
            for x in v.values_mut() {
                *x = 0.0;
            }
        }
    }

    /// Register every parameter as a tape leaf.
    pub fn leaves(&self, tape: &mut Tape) -> Leaves {
        let mut ids = HashMap::new();
        for (name, value) in &self.entries {
            ids.insert(name.clone(), tape.leaf(value.clone()));
        }
        Leaves { ids }
    }

    /// Gradients per parameter, in store order, extracted from a backward
    /// pass over `leaves`.
    pub fn collect_grads(
        &self,
        tape: &Tape,
        leaves: &Leaves,
        grads: &crate::math::Gradients,
    ) -> Vec<DenseArray> {
        self.entries
            .iter()
            .map(|(name, _)| grads.wrt(tape, leaves.id(name)))
            .collect()
    }

    /// FNV-1a over the raw bit patterns of every value, in store order.
    /// Detects any mutation, including sign-of-zero changes.
    pub fn checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf29ce484222325;
        let mut mix = |byte: u8| {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        };
        for (name, value) in &self.entries {
            for b in name.as_bytes() {
                mix(*b);
            }
            for v in value.values() {
                for b in (*v as f64).to_bits().to_le_bytes() {
                    mix(b);
                }
            }
        }
        hash
    }

    /// Flatten all values in store order (finite-difference harness).
    pub fn flatten(&self) -> Vec<Real> {
        let mut out = Vec::with_capacity(self.total_values());
        for (_, v) in &self.entries {
            out.extend_from_slice(v.values());
        }
        out
    }

    /// Rebuild a store with the same names/shapes from a flat vector.
    pub fn unflatten(&self, flat: &[Real]) -> ParamStore {
        assert_eq!(flat.len(), self.total_values());
        let mut out = ParamStore::new();
        let mut offset = 0;
        for (name, v) in &self.entries {
            let n = v.len();
            out.insert(
                name.clone(),
                DenseArray::new(v.shape().to_vec(), flat[offset..offset + n].to_vec()),
            );
            offset += n;
        }
        out
    }
}

/// Adam with global-norm gradient clipping.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
    pub clip_norm: Real,
    step: u64,
    m: Vec<DenseArray>,
    v: Vec<DenseArray>,
}

impl Adam {
    pub fn new(lr: Real, clip_norm: Real) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Clip `grads` to the global norm bound, apply one Adam update to
    /// `params` (store order), and return the post-clip gradient norm.
    pub fn update(&mut self, params: &mut ParamStore, mut grads: Vec<DenseArray>) -> Real {
        assert_eq!(grads.len(), params.len(), "grad/param count mismatch");
        if self.m.is_empty() {
            self.m = grads
                .iter()
                .map(|g| DenseArray::zeros(g.shape().to_vec()))
                .collect();
            self.v = self.m.clone();
        }
        let norm_sq: Real = grads
            .iter()
            .map(|g| g.values().iter().map(|x| x * x).sum::<Real>())
            .sum();
        let norm = norm_sq.sqrt();
        let scale = if norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };
        if scale != 1.0 {
            for g in &mut grads {
                g.scale_in_place(scale);
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, (_, p)) in params.entries.iter_mut().enumerate() {
            let g = &grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((pv, gv), (mv, vv)) in p
                .values_mut()
                .iter_mut()
                .zip(g.values())
                .zip(m.values_mut().iter_mut().zip(v.values_mut()))
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        norm * scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_is_stable() {
        let mut ps = ParamStore::new();
        ps.insert("b", DenseArray::scalar(1.0));
        ps.insert("a", DenseArray::scalar(2.0));
        let names: Vec<&str> = ps.names().collect();
        assert_eq!(names, vec!["b", "a"]);
    }

    #[test]
    fn checksum_detects_any_change() {
        let mut ps = ParamStore::new();
        ps.insert("w", DenseArray::vector(vec![1.0, 2.0, 3.0]));
        let before = ps.checksum();
        assert_eq!(before, ps.checksum());
        ps.get_mut("w").values_mut()[1] += 1e-15;
        assert_ne!(before, ps.checksum());
    }

    #[test]
    fn flatten_round_trip() {
        let mut ps = ParamStore::new();
        ps.insert("w", DenseArray::matrix(2, 2, vec![1.0, -2.0, 3.0, 0.5]));
        ps.insert("b", DenseArray::vector(vec![0.1, 0.2]));
        let flat = ps.flatten();
        let back = ps.unflatten(&flat);
        assert_eq!(ps.checksum(), back.checksum());
    }

    #[test]
    fn adam_minimizes_quadratic() {
        // minimize (x - 3)^2
        let mut ps = ParamStore::new();
        ps.insert("x", DenseArray::scalar(0.0));
        let mut opt = Adam::new(0.1, 100.0);
        for _ in 0..500 {
            let x = ps.get("x").item();
            let grads = vec![DenseArray::scalar(2.0 * (x - 3.0))];
            opt.update(&mut ps, grads);
        }
        assert!((ps.get("x").item() - 3.0).abs() < 1e-3);
    }

    #[test]
    fn clip_bounds_reported_norm() {
        let mut ps = ParamStore::new();
        ps.insert("x", DenseArray::vector(vec![0.0; 4]));
        let mut opt = Adam::new(0.001, 1.0);
        let big = vec![DenseArray::vector(vec![100.0; 4])];
        let norm = opt.update(&mut ps, big);
        assert!((norm - 1.0).abs() < 1e-12, "post-clip norm {norm}");
    }
}
