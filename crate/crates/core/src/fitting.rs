//! Small numerical helpers shared by the radiation, coefficient and tail
//! stages: weighted least squares and differentiation of sampled series.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    /// One-sigma standard errors from the residual variance.
    pub stderr: Vec<f64>,
    /// Weighted residual 2-norm.
    pub residual: f64,
}

/// Weighted least squares for y ≈ Σ_j coef_j basis_j(x), basis given as
/// rows `design[i][j]`. Columns are rescaled before the SVD solve.
pub fn lstsq(design: &[Vec<f64>], y: &[f64], w: Option<&[f64]>) -> Result<LinearFit> {
    let m = design.len();
    if m == 0 || m != y.len() {
        return Err(Error::Shape("design and data lengths differ".into()));
    }
    let k = design[0].len();
    if m < k {
        return Err(Error::Fit(format!("{m} samples for {k} parameters")));
    }
    let wt = |i: usize| w.map_or(1.0, |w| w[i]);
    let mut scale = vec![0.0f64; k];
    for row in design {
        for j in 0..k {
            scale[j] = scale[j].max(row[j].abs());
        }
    }
    for s in scale.iter_mut() {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let a = DMatrix::from_fn(m, k, |i, j| wt(i) * design[i][j] / scale[j]);
    let b = DVector::from_fn(m, |i, _| wt(i) * y[i]);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-14).map_err(|e| Error::Fit(e.to_string()))?;
    let r = &a * &x - &b;
    let residual = r.norm();
    let dof = (m - k).max(1) as f64;
    let sigma2 = residual * residual / dof;
    // covariance (AᵀA)⁻¹ σ² through the singular values
    let v_t = svd.v_t.as_ref().expect("requested");
    let mut stderr = vec![0.0; k];
    for j in 0..k {
        let mut var = 0.0;
        for (l, sv) in svd.singular_values.iter().enumerate() {
            if *sv > 1e-14 * svd.singular_values[0] {
                var += (v_t[(l, j)] / sv).powi(2);
            }
        }
        stderr[j] = (var * sigma2).sqrt() / scale[j];
    }
    let coef = (0..k).map(|j| x[j] / scale[j]).collect();
    Ok(LinearFit { coef, stderr, residual })
}

/// Weights of the derivative of order `m` at `x0` for the nodes `xs`.
pub fn fornberg(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

fn window(n: usize, i: usize, width: usize) -> usize {
    let half = width / 2;
    i.saturating_sub(half).min(n - width)
}

/// dy/dt on an arbitrary increasing grid from local polynomials through
/// `width` neighbouring samples (width 5 gives fourth order).
pub fn derivative_with(t: &[f64], y: &[f64], width: usize) -> Vec<f64> {
    let n = t.len();
    if n < width {
        return derivative_with(t, y, n.max(2));
    }
    (0..n)
        .map(|i| {
            let s = window(n, i, width);
            let w = fornberg(t[i], &t[s..s + width], 1);
            w.iter().zip(&y[s..s + width]).map(|(a, b)| a * b).sum()
        })
        .collect()
}

pub fn derivative(t: &[f64], y: &[f64]) -> Vec<f64> {
    derivative_with(t, y, 5)
}

/// ∫₀^{t_i} y for every sample, with fourth-order endpoint corrections.
pub fn cumulative_integral(t: &[f64], y: &[f64]) -> Vec<f64> {
    let dy = derivative(t, y);
    crate::quadrature::cumulative_corrected(t, y, &dy)
}
