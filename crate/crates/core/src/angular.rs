//! Functions on the unit sphere sampled on a Gauss–Legendre × uniform
//! longitude grid, with a real spherical-harmonic view.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Quadrature grid on S² plus a table of real orthonormal Y_lm at the nodes.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub lmax: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    /// cos θ at the latitude nodes.
    pub cos_theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Node weights, row-major over (theta, phi). They sum to 4π.
    pub weights: Vec<f64>,
    ylm: Vec<Vec<f64>>,
}

/// Flat index of the real harmonic (l, m), -l <= m <= l.
pub fn mode_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Inverse of [`mode_index`].
pub fn mode_of_index(idx: usize) -> (usize, i64) {
    let l = (idx as f64).sqrt().floor() as usize;
    let l = if (l + 1) * (l + 1) <= idx { l + 1 } else { l };
    (l, idx as i64 - (l * l + l) as i64)
}

impl SphereGrid {
    /// Smallest grid that integrates products of two degree-`lmax` fields exactly.
    pub fn new(lmax: usize) -> Arc<Self> {
        Self::with_nodes(lmax, lmax + 1, 2 * lmax + 1).expect("default grid is valid")
    }

    pub fn with_nodes(lmax: usize, n_theta: usize, n_phi: usize) -> Result<Arc<Self>> {
        if n_theta < lmax + 1 || n_phi < 2 * lmax + 1 {
            return Err(Error::InvalidParameter(format!(
                "grid {n_theta}x{n_phi} too coarse for lmax {lmax}"
            )));
        }
        let (cos_theta, wx) = gauss_legendre(n_theta);
        let phi: Vec<f64> = (0..n_phi).map(|j| 2.0 * PI * j as f64 / n_phi as f64).collect();
        let wphi = 2.0 * PI / n_phi as f64;
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for &w in &wx {
            for _ in 0..n_phi {
                weights.push(w * wphi);
            }
        }
        let nmodes = (lmax + 1) * (lmax + 1);
        let mut ylm = vec![vec![0.0; n_theta * n_phi]; nmodes];
        for (it, &x) in cos_theta.iter().enumerate() {
            let plm = normalized_legendre(lmax, x);
            for (jp, &ph) in phi.iter().enumerate() {
                let node = it * n_phi + jp;
                for l in 0..=lmax {
                    for m in -(l as i64)..=(l as i64) {
                        let p = plm[l][m.unsigned_abs() as usize];
                        let v = match m {
                            0 => p,
                            m if m > 0 => std::f64::consts::SQRT_2 * p * (m as f64 * ph).cos(),
                            m => std::f64::consts::SQRT_2 * p * ((-m) as f64 * ph).sin(),
                        };
                        ylm[mode_index(l, m)][node] = v;
                    }
                }
            }
        }
        Ok(Arc::new(SphereGrid { lmax, n_theta, n_phi, cos_theta, phi, weights, ylm }))
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_modes(&self) -> usize {
        (self.lmax + 1) * (self.lmax + 1)
    }

    /// (θ, φ) of a flat node index.
    pub fn node(&self, idx: usize) -> (f64, f64) {
        let it = idx / self.n_phi;
        (self.cos_theta[it].acos(), self.phi[idx % self.n_phi])
    }

    pub fn ylm_values(&self, l: usize, m: i64) -> &[f64] {
        &self.ylm[mode_index(l, m)]
    }

    pub fn analyze(&self, values: &[f64]) -> Vec<f64> {
        self.ylm
            .iter()
            .map(|y| y.iter().zip(values).zip(&self.weights).map(|((y, v), w)| y * v * w).sum())
            .collect()
    }

    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (c, y) in coeffs.iter().zip(&self.ylm) {
            if *c != 0.0 {
                for (o, yv) in out.iter_mut().zip(y) {
                    *o += c * yv;
                }
            }
        }
        out
    }
}

/// Orthonormal associated Legendre functions without the Condon–Shortley
/// phase, `p[l][m]` for 0 <= m <= l <= lmax, including the 1/sqrt(4π) factor.
fn normalized_legendre(lmax: usize, x: f64) -> Vec<Vec<f64>> {
    let sx = (1.0 - x * x).max(0.0).sqrt();
    let mut p = vec![vec![0.0; lmax + 1]; lmax + 1];
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            pmm *= sx * ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
        }
        p[m][m] = pmm;
        if m < lmax {
            p[m + 1][m] = ((2 * m + 3) as f64).sqrt() * x * pmm;
        }
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            p[l][m] = a * (x * p[l - 1][m] - b * p[l - 2][m]);
        }
    }
    p
}

/// A real function on S².
#[derive(Debug, Clone)]
pub struct AngularField {
    pub grid: Arc<SphereGrid>,
    pub values: Vec<f64>,
}

impl AngularField {
    pub fn constant(grid: &Arc<SphereGrid>, value: f64) -> Self {
        AngularField { grid: grid.clone(), values: vec![value; grid.len()] }
    }

    pub fn zeros(grid: &Arc<SphereGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: &Arc<SphereGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| {
            let (th, ph) = grid.node(i);
            f(th, ph)
        });
        AngularField { grid: grid.clone(), values: values.collect() }
    }

    /// The real harmonic Y_lm sampled on the grid.
    pub fn ylm(grid: &Arc<SphereGrid>, l: usize, m: i64) -> Self {
        AngularField { grid: grid.clone(), values: grid.ylm_values(l, m).to_vec() }
    }

    pub fn from_coeffs(grid: &Arc<SphereGrid>, coeffs: &[f64]) -> Self {
        AngularField { grid: grid.clone(), values: grid.synthesize(coeffs) }
    }

    pub fn coeffs(&self) -> Vec<f64> {
        self.grid.analyze(&self.values)
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().zip(&self.grid.weights).map(|(v, w)| v * w).sum()
    }

    pub fn average(&self) -> f64 {
        self.integral() / (4.0 * PI)
    }

    /// Positive Laplacian on S²: Y_lm ↦ l(l+1) Y_lm.
    pub fn laplacian(&self) -> Self {
        if self.values.iter().all(|v| *v == self.values[0]) {
            return Self::zeros(&self.grid);
        }
        let mut c = self.coeffs();
        for (i, ci) in c.iter_mut().enumerate() {
            let (l, _) = mode_of_index(i);
            *ci *= (l * (l + 1)) as f64;
        }
        Self::from_coeffs(&self.grid, &c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        AngularField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        AngularField { grid: self.grid.clone(), values }
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| k * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Root-mean-square over the sphere.
    pub fn rms(&self) -> f64 {
        (self.map(|v| v * v).average()).max(0.0).sqrt()
    }

    pub fn is_constant(&self, tol: f64) -> bool {
        let a = self.average();
        self.values.iter().all(|v| (v - a).abs() <= tol * (1.0 + a.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_four_pi() {
        for lmax in [0, 3, 8, 12] {
            let g = SphereGrid::new(lmax);
            let s: f64 = g.weights.iter().sum();
            assert!((s / (4.0 * PI) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonics_are_orthonormal() {
        let g = SphereGrid::new(6);
        let n = g.n_modes();
        for a in 0..n {
            for b in 0..n {
                let ip: f64 = (0..g.len()).map(|k| g.ylm[a][k] * g.ylm[b][k] * g.weights[k]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-12, "({a},{b}) -> {ip}");
            }
        }
    }

    #[test]
    fn y10_is_cos_theta() {
        let g = SphereGrid::new(2);
        let y = AngularField::ylm(&g, 1, 0);
        let want = AngularField::from_fn(&g, |th, _| (3.0 / (4.0 * PI)).sqrt() * th.cos());
        for (a, b) in y.values.iter().zip(&want.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn laplacian_eigenvalues() {
        let g = SphereGrid::new(5);
        for l in 0..=5 {
            let y = AngularField::ylm(&g, l, -(l as i64).min(2));
            let ly = y.laplacian();
            for (a, b) in ly.values.iter().zip(&y.values) {
                assert!((a - (l * (l + 1)) as f64 * b).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn mode_index_roundtrip() {
        for l in 0..10 {
            for m in -(l as i64)..=(l as i64) {
                assert_eq!(mode_of_index(mode_index(l, m)), (l, m));
            }
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        assert!(SphereGrid::with_nodes(4, 3, 9).is_err());
    }
}
