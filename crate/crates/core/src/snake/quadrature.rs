//! Uniform arc-length grid, trapezoid integrals and the mean-zero anti-derivative.

use crate::{Error, Result};

/// `n` uniformly spaced samples over `[0, length]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    length: f64,
    h: f64,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidConfig(format!("grid needs at least 3 samples, got {n}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidConfig(format!("grid length must be positive, got {length}")));
        }
        let h = length / (n - 1) as f64;
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;
        Ok(Self { n, length, h, weights })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Trapezoid weights; they sum to the body length.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn s(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n);
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Trapezoid mean `(1/L) ∫ f ds`.
    pub fn mean(&self, f: &[f64]) -> f64 {
        self.integrate(f) / self.length
    }

    /// `∫_0^s f` at every sample.
    ///
    /// Each interval uses the quadratic interpolant through three neighbouring
    /// samples, which keeps the cumulative error third order.
    pub fn cumulative_into(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n;
        debug_assert!(f.len() == n && out.len() == n);
        let c = self.h / 12.0;
        out[0] = 0.0;
        for j in 0..n - 2 {
            out[j + 1] = out[j] + c * (5.0 * f[j] + 8.0 * f[j + 1] - f[j + 2]);
        }
        out[n - 1] = out[n - 2] + c * (-f[n - 3] + 8.0 * f[n - 2] + 5.0 * f[n - 1]);
    }

    /// Mean-zero anti-derivative `I0[f](s) = ∫_0^s f - (1/L) ∫_0^L ∫_0^s f`.
    pub fn i0_into(&self, f: &[f64], out: &mut [f64]) {
        self.cumulative_into(f, out);
        let m = self.mean(out);
        for v in out.iter_mut() {
            *v -= m;
        }
    }

    pub fn i0(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.i0_into(f, &mut out);
        out
    }

    /// Index of the equal-length segment (out of `segments`) holding sample `j`.
    pub fn segment_of(&self, j: usize, segments: usize) -> usize {
        ((self.s(j) * segments as f64 / self.length) as usize).min(segments - 1)
    }

    /// Exact `∫_0^s f` for `f` constant on each of `values.len()` equal segments.
    pub fn piecewise_cumulative_into(&self, values: &[f64], out: &mut [f64]) {
        let m = values.len();
        let seg = self.length / m as f64;
        let mut k = 0;
        let mut base = 0.0;
        for (j, o) in out.iter_mut().enumerate() {
            let s = self.s(j);
            while k + 1 < m && s >= (k + 1) as f64 * seg {
                base += values[k] * seg;
                k += 1;
            }
            *o = base + values[k] * (s - k as f64 * seg);
        }
    }

    /// Mean-zero anti-derivative of a piecewise-constant function, exact at the samples
    /// up to the trapezoid mean.
    pub fn piecewise_i0_into(&self, values: &[f64], out: &mut [f64]) {
        self.piecewise_cumulative_into(values, out);
        let m = self.mean(out);
        for v in out.iter_mut() {
            *v -= m;
        }
    }

    /// Point samples of a piecewise-constant function.
    pub fn piecewise_samples(&self, values: &[f64]) -> Vec<f64> {
        (0..self.n).map(|j| values[self.segment_of(j, values.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_has_closed_form() {
        let g = Grid::new(401, 0.5).unwrap();
        let c = 3.25;
        let out = g.i0(&vec![c; 401]);
        for (j, v) in out.iter().enumerate() {
            assert!((v - c * (g.s(j) - 0.25)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = Grid::new(51, 1.0).unwrap();
        assert!(g.i0(&[0.0; 51]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_tiny_grid() {
        assert!(Grid::new(2, 1.0).is_err());
        assert!(Grid::new(10, 0.0).is_err());
    }

    #[test]
    fn weights_sum_to_length() {
        let g = Grid::new(401, 0.5).unwrap();
        assert!((g.weights().iter().sum::<f64>() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn piecewise_cumulative_is_exact() {
        let g = Grid::new(11, 1.0).unwrap();
        let mut out = vec![0.0; 11];
        g.piecewise_cumulative_into(&[2.0, -1.0, 4.0], &mut out);
        // breaks at 1/3 and 2/3
        let exact = |s: f64| {
            if s < 1.0 / 3.0 {
                2.0 * s
            } else if s < 2.0 / 3.0 {
                2.0 / 3.0 - (s - 1.0 / 3.0)
            } else {
                1.0 / 3.0 + 4.0 * (s - 2.0 / 3.0)
            }
        };
        for (j, v) in out.iter().enumerate() {
            assert!((v - exact(g.s(j))).abs() < 1e-14, "sample {j}");
        }
        let samples = g.piecewise_samples(&[2.0, -1.0, 4.0]);
        assert_eq!(samples[0], 2.0);
        assert_eq!(samples[5], -1.0);
        assert_eq!(samples[10], 4.0);
    }

    proptest! {
        #[test]
        fn output_has_zero_mean(values in prop::collection::vec(-1e3f64..1e3, 5..200)) {
            let g = Grid::new(values.len(), 0.5).unwrap();
            let out = g.i0(&values);
            let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            prop_assert!(g.mean(&out).abs() <= 1e-10 * scale);
        }
    }
}
