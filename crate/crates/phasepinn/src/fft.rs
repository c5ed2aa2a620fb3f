//! Self-contained radix-2 FFT used by the spectral reference solver and for
//! trigonometric interpolation/differentiation on periodic grids.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Planned transform for a fixed power-of-two size: precomputes the forward
/// twiddle table once so repeated transforms (one per time step) stay cheap.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    /// roots[j] = exp(-2πi·j/n) for j in 0..n/2
    roots: Vec<Complex64>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Precondition(format!(
                "FFT size must be a power of two, got {n}"
            )));
        }
        let roots = (0..n / 2)
            .map(|j| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * j as f64 / n as f64))
            .collect();
        Ok(Fft { n, roots })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward DFT: X_k = Σ_j x_j e^{-2πi jk/n}. No normalization.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length must match plan size");
        self.transform(buf);
    }

    /// In-place inverse DFT, normalized by 1/n (so inverse∘forward = identity).
    pub fn inverse(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length must match plan size");
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.transform(buf);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v = v.conj() * scale;
        }
    }

    fn transform(&self, buf: &mut [Complex64]) {
        let n = self.n;
        // Bit-reversal permutation.
        let shift = (n.leading_zeros() + 1) as u32;
        for i in 0..n {
            let j = i.reverse_bits() >> shift;
            if j > i {
                buf.swap(i, j);
            }
        }
        // Iterative butterflies.
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            let mut start = 0;
            while start < n {
                for j in 0..half {
                    let w = self.roots[j * stride];
                    let a = buf[start + j];
                    let b = buf[start + j + half] * w;
                    buf[start + j] = a + b;
                    buf[start + j + half] = a - b;
                }
                start += len;
            }
            len *= 2;
        }
    }
}

/// Forward 2D DFT over a (rows × cols) array, in place. `row_plan` must match
/// the number of columns (transform along each row) and `col_plan` the number
/// of rows.
pub fn forward2(a: &mut Array2<Complex64>, row_plan: &Fft, col_plan: &Fft) {
    transform2(a, row_plan, col_plan, false);
}

/// Inverse 2D DFT (normalized by 1/(rows·cols)), in place.
pub fn inverse2(a: &mut Array2<Complex64>, row_plan: &Fft, col_plan: &Fft) {
    transform2(a, row_plan, col_plan, true);
}

fn transform2(a: &mut Array2<Complex64>, row_plan: &Fft, col_plan: &Fft, inverse: bool) {
    let (rows, cols) = a.dim();
    assert_eq!(row_plan.len(), cols, "row plan size must equal column count");
    assert_eq!(col_plan.len(), rows, "column plan size must equal row count");
    let mut scratch = vec![Complex64::new(0.0, 0.0); cols.max(rows)];
    for mut row in a.rows_mut() {
        let buf = &mut scratch[..cols];
        for (dst, src) in buf.iter_mut().zip(row.iter()) {
            *dst = *src;
        }
        if inverse {
            row_plan.inverse(buf);
        } else {
            row_plan.forward(buf);
        }
        for (src, dst) in buf.iter().zip(row.iter_mut()) {
            *dst = *src;
        }
    }
    for mut col in a.columns_mut() {
        let buf = &mut scratch[..rows];
        for (dst, src) in buf.iter_mut().zip(col.iter()) {
            *dst = *src;
        }
        if inverse {
            col_plan.inverse(buf);
        } else {
            col_plan.forward(buf);
        }
        for (src, dst) in buf.iter().zip(col.iter_mut()) {
            *dst = *src;
        }
    }
}

/// Angular wavenumbers for an n-point periodic grid of physical length `length`:
/// k_j = 2π·m_j/length with m_j = j for j ≤ n/2 and j−n beyond.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / length;
    (0..n)
        .map(|j| {
            let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            base * m
        })
        .collect()
}
