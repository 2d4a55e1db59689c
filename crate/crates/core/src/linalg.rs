//! Small dense helpers shared by the graph, estimators and benchmark code.

use alloc::vec;
use alloc::vec::Vec;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Wraps row-major `data`; `None` if the length does not match `rows * cols`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from equally sized rows; `None` when the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Option<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return None;
            }
            data.extend_from_slice(r);
        }
        Some(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact(0) panics, and a zero-column matrix has no data to chunk anyway.
        (0..self.rows).map(move |r| self.row(r))
    }

    /// `self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        self.iter_rows().map(|row| dot(row, v)).collect()
    }

    /// `selfᵀ * v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &s) in self.iter_rows().zip(v) {
            if s == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += s * w;
            }
        }
        out
    }

    /// Column means.
    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![NeumaierSum::default(); self.cols];
        for row in self.iter_rows() {
            for (s, &v) in sums.iter_mut().zip(row) {
                s.add(v);
            }
        }
        let n = self.rows.max(1) as f64;
        sums.into_iter().map(|s| s.total() / n).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compensated (Kahan-Babuška-Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if libm::fabs(self.sum) >= libm::fabs(v) {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator.
pub fn sum_compensated<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = NeumaierSum::default();
    for v in it {
        s.add(v);
    }
    s.total()
}

/// Element-wise mean of equally long vectors with compensated accumulation.
pub(crate) fn mean_of_vectors(vectors: &[Vec<f64>]) -> Vec<f64> {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut acc = vec![NeumaierSum::default(); dim];
    for v in vectors {
        for (a, &x) in acc.iter_mut().zip(v) {
            a.add(x);
        }
    }
    let n = vectors.len() as f64;
    acc.into_iter().map(|a| a.total() / n).collect()
}

/// `ln(k!)` for `k = 0..=n`.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = NeumaierSum::default();
    out.push(0.0);
    for k in 1..=n {
        acc.add(libm::log(k as f64));
        out.push(acc.total());
    }
    out
}

/// Binomial coefficient as `f64`, exact for the small arguments used here.
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut out = 1.0;
    for j in 0..k {
        out = out * (n - j) as f64 / (j + 1) as f64;
    }
    out
}
