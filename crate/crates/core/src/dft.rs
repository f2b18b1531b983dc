//! Direct two-dimensional DFT over one latent plane.
//!
//! Plain `O(N²)` per axis with a precomputed twiddle table. At 64×64 that is
//! about half a million complex multiply-adds per transform.

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct Dft2 {
    height: usize,
    width: usize,
    twiddle_h: Vec<Complex64>,
    twiddle_w: Vec<Complex64>,
}

fn twiddles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(1.0, -std::f64::consts::TAU * k as f64 / n as f64))
        .collect()
}

fn dft_1d(input: &[Complex64], out: &mut [Complex64], tw: &[Complex64], inverse: bool) {
    let n = input.len();
    for (k, slot) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, x) in input.iter().enumerate() {
            let t = tw[(k * j) % n];
            acc += x * if inverse { t.conj() } else { t };
        }
        *slot = acc;
    }
}

impl Dft2 {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            twiddle_h: twiddles(height),
            twiddle_w: twiddles(width),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn forward_real(&self, plane: &[f64]) -> Vec<Complex64> {
        let data: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(data, false)
    }

    /// Inverse transform including the `1/(H·W)` normalization.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let scale = 1.0 / (self.height * self.width) as f64;
        let mut out = self.transform(spectrum.to_vec(), true);
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    fn transform(&self, mut data: Vec<Complex64>, inverse: bool) -> Vec<Complex64> {
        assert_eq!(data.len(), self.height * self.width, "plane size");
        let (h, w) = (self.height, self.width);
        let mut row_out = vec![Complex64::default(); w];
        for r in 0..h {
            let row = &mut data[r * w..(r + 1) * w];
            dft_1d(row, &mut row_out, &self.twiddle_w, inverse);
            row.copy_from_slice(&row_out);
        }
        let mut col = vec![Complex64::default(); h];
        let mut col_out = vec![Complex64::default(); h];
        for c in 0..w {
            for r in 0..h {
                col[r] = data[r * w + c];
            }
            dft_1d(&col, &mut col_out, &self.twiddle_h, inverse);
            for r in 0..h {
                data[r * w + c] = col_out[r];
            }
        }
        data
    }

    /// Index of the conjugate-symmetric partner `(-u mod H, -v mod W)`.
    pub fn conjugate_index(&self, u: usize, v: usize) -> usize {
        let cu = (self.height - u) % self.height;
        let cv = (self.width - v) % self.width;
        cu * self.width + cv
    }

    /// Distance of bin `(u, v)` from the DC term of the centered spectrum.
    pub fn radius(&self, u: usize, v: usize) -> f64 {
        let fu = centered(u, self.height) as f64;
        let fv = centered(v, self.width) as f64;
        fu.hypot(fv)
    }
}

/// Signed frequency of bin `k` in an `n`-point transform.
pub fn centered(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}
