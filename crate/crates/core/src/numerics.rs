//! Dense row-major matrices, numerically stable nonlinearities, and a
//! seeded deterministic random generator.
//!
//! Everything downstream (the losses, the MLP, data generation, the
//! harness) sits on this module. Values are `f64` throughout: the
//! gradient checks elsewhere in the crate compare analytic derivatives
//! against central finite differences at 1e-5 relative tolerance, which
//! single precision cannot support.

use crate::error::{Error, Result};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense matrix of `f64` values in row-major order.
///
/// Constructors reject non-finite entries; dimensions are always positive.
/// All matrices in this crate are desk-scale (at most a few thousand
/// entries), so there is no blocking, no sparsity, and no transposition
/// trickery, just contiguous rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix. Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major values, validating count and finiteness.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Matrix> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "matrix entries must be finite, got {bad}"
            )));
        }
        Ok(Matrix { rows, cols, values })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        if rows.is_empty() {
            return Err(Error::Shape("matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Matrix::from_vec(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Borrow row `r` as a slice.
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.values[r * self.cols + c] = v;
    }

    /// Elementwise map. The caller is responsible for keeping results finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transposed(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        out
    }

    /// Standard matrix product. Errors on inner-dimension mismatch and on a
    /// non-finite result (which can only arise from astronomically large
    /// inputs).
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.values[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = rhs.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        if !out.values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "matrix product overflowed to a non-finite value".into(),
            ));
        }
        Ok(out)
    }

    /// Column sums as a vector of length `cols`.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, &v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }
}

/// Numerically stable softmax (max-subtraction before exponentiation).
///
/// Output entries are positive and sum to 1 within 1e-9 for any finite
/// input, including widely spread logits like `[1000, 0]`.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidInput("softmax input must be nonempty".into()));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "softmax input must be finite, got {bad}"
        )));
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for o in &mut out {
        *o /= sum;
    }
    Ok(out)
}

/// Applies [`softmax`] to each row of a logit matrix.
pub fn softmax_rows(logits: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let p = softmax(logits.row(r))?;
        out.row_mut(r).copy_from_slice(&p);
    }
    Ok(out)
}

/// Logistic sigmoid, evaluated without overflow for any finite input.
///
/// Satisfies `sigmoid(-x) == 1 - sigmoid(x)` up to rounding by construction.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(max(x, eps))`: the log used inside every cross-entropy term so a
/// zero probability never produces `-inf`.
pub fn clamped_log(x: f64, eps: f64) -> Result<f64> {
    validate_log_eps(eps)?;
    Ok(x.max(eps).ln())
}

/// The clamp floor must be in `(0, 1e-3]`: strictly positive to bound the
/// log, and small enough to never mask a probability a trained model emits.
pub fn validate_log_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(Error::Config(format!(
            "log clamp epsilon must be in (0, 1e-3], got {eps}"
        )));
    }
    Ok(())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic, platform-independent random generator.
///
/// Backed by the ChaCha8 stream cipher: two generators built from the same
/// seed emit identical streams on every platform, which is what makes whole
/// training runs byte-reproducible. A generator is single-owner; use
/// [`SeededRng::derive`] to obtain decorrelated child generators for
/// parallel or multi-phase work.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> SeededRng {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child generator with a seed mixed from this generator's seed and a
    /// stream label. Does not advance this generator.
    pub fn derive(&self, stream: u64) -> SeededRng {
        SeededRng::new(splitmix64(self.seed ^ splitmix64(stream)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw (Box-Muller, cosine branch; two u64s per draw).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]: keeps the log finite
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform draw from `0..n` via rejection sampling (no modulo bias).
    pub fn next_below(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_below needs a positive bound");
        let n64 = n as u64;
        let rem = (u64::MAX % n64 + 1) % n64;
        loop {
            let v = self.next_u64();
            if rem == 0 || v <= u64::MAX - rem {
                return (v % n64) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Fisher-Yates shuffle driven by this generator.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i + 1);
            xs.swap(i, j);
        }
    }
}
