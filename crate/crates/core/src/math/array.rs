//! Row-major dense arrays. The carrier for every vector and matrix in the
//! crate; most values are rank-1 or rank-2.

use crate::math::{MathError, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseArray {
    shape: Vec<usize>,
    values: Vec<Real>,
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, values: Vec<Real>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(
            n,
            values.len(),
            "shape {:?} does not match {} values",
            shape,
            values.len()
        );
        Self { shape, values }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn scalar(v: Real) -> Self {
        Self {
            shape: vec![1],
            values: vec![v],
        }
    }

    pub fn vector(values: Vec<Real>) -> Self {
        Self {
            shape: vec![values.len()],
            values,
        }
    }

    /// n×m matrix from row-major values.
    pub fn matrix(rows: usize, cols: usize, values: Vec<Real>) -> Self {
        Self::new(vec![rows, cols], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Real] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Real] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Real> {
        self.values
    }

    /// Rows of a rank-2 array (a rank-1 array counts as a single row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            r => panic!("rows() on rank-{r} array"),
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            r => panic!("cols() on rank-{r} array"),
        }
    }

    pub fn row(&self, i: usize) -> &[Real] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn item(&self) -> Real {
        assert_eq!(self.values.len(), 1, "item() on non-scalar");
        self.values[0]
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> Self {
        Self::new(shape, self.values.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, context: &'static str) {
        debug_assert!(self.all_finite(), "non-finite values after {context}");
    }

    pub fn map(&self, f: impl Fn(Real) -> Real) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(Real, Real) -> Real) -> Self {
        assert_eq!(self.shape, other.shape, "zip shape mismatch");
        Self {
            shape: self.shape.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_in_place(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add shape mismatch");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += *b;
        }
    }

    pub fn scale_in_place(&mut self, c: Real) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn sum(&self) -> Real {
        self.values.iter().sum()
    }

    pub fn dims2(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn require_same_len(&self, other: &Self, context: &'static str) -> Result<(), MathError> {
        if self.len() != other.len() {
            return Err(MathError::DimensionMismatch {
                left: self.len(),
                right: other.len(),
                context,
            });
        }
        Ok(())
    }
}

/// C = A · B for row-major matrices, `A: n×k`, `B: k×m`.
pub fn matmul(a: &DenseArray, b: &DenseArray) -> DenseArray {
    let (n, k) = a.dims2();
    let (kb, m) = b.dims2();
    assert_eq!(k, kb, "matmul inner dims {k} vs {kb}");
    let av = a.values();
    let bv = b.values();
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &av[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &aval) in arow.iter().enumerate() {
            if aval == 0.0 {
                continue;
            }
            let brow = &bv[p * m..(p + 1) * m];
            for (o, &bval) in orow.iter_mut().zip(brow) {
                *o += aval * bval;
            }
        }
    }
    DenseArray::matrix(n, m, out)
}

/// C = A · Bᵀ, `A: n×k`, `B: m×k`.
pub fn matmul_nt(a: &DenseArray, b: &DenseArray) -> DenseArray {
    let (n, k) = a.dims2();
    let (m, kb) = b.dims2();
    assert_eq!(k, kb, "matmul_nt inner dims {k} vs {kb}");
    let av = a.values();
    let bv = b.values();
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &av[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for j in 0..m {
            let brow = &bv[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            orow[j] = acc;
        }
    }
    DenseArray::matrix(n, m, out)
}

/// C = Aᵀ · B, `A: k×n`, `B: k×m`.
pub fn matmul_tn(a: &DenseArray, b: &DenseArray) -> DenseArray {
    let (k, n) = a.dims2();
    let (kb, m) = b.dims2();
    assert_eq!(k, kb, "matmul_tn inner dims {k} vs {kb}");
    let av = a.values();
    let bv = b.values();
    let mut out = vec![0.0; n * m];
    for p in 0..k {
        let arow = &av[p * n..(p + 1) * n];
        let brow = &bv[p * m..(p + 1) * m];
        for (i, &aval) in arow.iter().enumerate() {
            if aval == 0.0 {
                continue;
            }
            let orow = &mut out[i * m..(i + 1) * m];
            for (o, &bval) in orow.iter_mut().zip(brow) {
                *o += aval * bval;
            }
        }
    }
    DenseArray::matrix(n, m, out)
}
