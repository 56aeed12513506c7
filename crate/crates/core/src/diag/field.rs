//! Binned vector fields over the 2D embedding: per-bin mean one-step
//! displacement of consecutive embedded features.

use crate::diag::{feature_of, DiagError, EmbeddingModel};
use crate::math::Real;
use crate::rollout::LatentTrajectory;

#[derive(Clone, Debug)]
pub struct VectorField {
    pub bins_x: usize,
    pub bins_y: usize,
    /// Lower-left corner of the binned box.
    pub x0: Real,
    pub y0: Real,
    /// Bin extents.
    pub dx: Real,
    pub dy: Real,
    sum_x: Vec<Real>,
    sum_y: Vec<Real>,
    count: Vec<u64>,
}

impl VectorField {
    pub fn count(&self, ix: usize, iy: usize) -> u64 {
        self.count[iy * self.bins_x + ix]
    }

    /// Mean displacement of a bin; `None` while empty.
    pub fn mean(&self, ix: usize, iy: usize) -> Option<[Real; 2]> {
        let i = iy * self.bins_x + ix;
        if self.count[i] == 0 {
            None
        } else {
            let n = self.count[i] as Real;
            Some([self.sum_x[i] / n, self.sum_y[i] / n])
        }
    }

    pub fn total_count(&self) -> u64 {
        self.count.iter().sum()
    }

    pub fn nonempty_bins(&self) -> usize {
        self.count.iter().filter(|&&c| c > 0).count()
    }

    /// Bin center in embedding coordinates.
    pub fn center(&self, ix: usize, iy: usize) -> [Real; 2] {
        [
            self.x0 + (ix as Real + 0.5) * self.dx,
            self.y0 + (iy as Real + 0.5) * self.dy,
        ]
    }

    fn bin_of(&self, p: [Real; 2]) -> (usize, usize) {
        let fx = ((p[0] - self.x0) / self.dx).floor();
        let fy = ((p[1] - self.y0) / self.dy).floor();
        let ix = (fx.max(0.0) as usize).min(self.bins_x - 1);
        let iy = (fy.max(0.0) as usize).min(self.bins_y - 1);
        (ix, iy)
    }
}

/// Accumulate one-step displacements of every consecutive step pair into a
/// `bins × bins` grid over the data bounding box with a 5% margin.
/// Displacements are anchored at the earlier point of each pair.
pub fn build_vector_field(
    emb: &EmbeddingModel,
    trajs: &[LatentTrajectory],
    bins: usize,
) -> Result<VectorField, DiagError> {
    let embedded: Vec<Vec<[Real; 2]>> = trajs
        .iter()
        .map(|t| {
            t.steps
                .iter()
                .map(|s| emb.project(&feature_of(s)))
                .collect()
        })
        .collect();
    let transitions: usize = embedded.iter().map(|t| t.len().saturating_sub(1)).sum();
    if transitions == 0 {
        return Err(DiagError::NoTransitions);
    }
    let mut min = [Real::INFINITY; 2];
    let mut max = [Real::NEG_INFINITY; 2];
    for t in &embedded {
        for p in t {
            for i in 0..2 {
                min[i] = min[i].min(p[i]);
                max[i] = max[i].max(p[i]);
            }
        }
    }
    let margin = |lo: Real, hi: Real| {
        let extent = (hi - lo).max(1e-9);
        (lo - 0.05 * extent, hi + 0.05 * extent)
    };
    let (x0, x1) = margin(min[0], max[0]);
    let (y0, y1) = margin(min[1], max[1]);
    let mut field = VectorField {
        bins_x: bins,
        bins_y: bins,
        x0,
        y0,
        dx: (x1 - x0) / bins as Real,
        dy: (y1 - y0) / bins as Real,
        sum_x: vec![0.0; bins * bins],
        sum_y: vec![0.0; bins * bins],
        count: vec![0; bins * bins],
    };
    for t in &embedded {
        for w in t.windows(2) {
            let (ix, iy) = field.bin_of(w[0]);
            let i = iy * field.bins_x + ix;
            field.sum_x[i] += w[1][0] - w[0][0];
            field.sum_y[i] += w[1][1] - w[0][1];
            field.count[i] += 1;
        }
    }
    Ok(field)
}
