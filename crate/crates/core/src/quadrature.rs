//! Quadrature rules: Gauss–Legendre nodes, adaptive Gauss–Kronrod,
//! sampled-data trapezoid rules and Filon panels.

use num_complex::Complex64;

/// Gauss–Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut impl FnMut(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    ((k * h), ((k - g) * h).norm())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: Complex64,
    pub error: f64,
}

/// Adaptive Gauss–Kronrod (7/15) on [a, b] with optional interior breakpoints.
pub fn integrate_complex(
    mut f: impl FnMut(f64) -> Complex64,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Integral {
    let mut segs: Vec<(f64, f64, Complex64, f64)> = breakpoints
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    for _ in 0..4000 {
        let total: Complex64 = segs.iter().map(|s| s.2).sum();
        let err: f64 = segs.iter().map(|s| s.3).sum();
        if err <= abs_tol.max(rel_tol * total.norm()) {
            break;
        }
        let (idx, _) = segs
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, s)| if s.3 > acc.1 { (i, s.3) } else { acc });
        let (a, b, _, _) = segs.swap_remove(idx);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let (v1, e1) = gk15(&mut f, a, m);
        let (v2, e2) = gk15(&mut f, m, b);
        segs.push((a, m, v1, e1));
        segs.push((m, b, v2, e2));
    }
    Integral { value: segs.iter().map(|s| s.2).sum(), error: segs.iter().map(|s| s.3).sum() }
}

/// Real adaptive integral over [a, b].
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    let r = integrate_complex(|x| Complex64::new(f(x), 0.0), &[a, b], abs_tol, rel_tol);
    (r.value.re, r.error)
}

/// Complex integral over [a, ∞) through the map x = a + u/(1-u).
pub fn integrate_complex_semi_infinite(
    mut f: impl FnMut(f64) -> Complex64,
    a: f64,
    splits: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Integral {
    let mut bp: Vec<f64> = vec![0.0];
    for &x in splits {
        if x > a {
            let d = x - a;
            bp.push(d / (1.0 + d));
        }
    }
    bp.push(1.0);
    integrate_complex(
        |u| {
            if u >= 1.0 {
                return Complex64::new(0.0, 0.0);
            }
            let om = 1.0 - u;
            f(a + u / om) / (om * om)
        },
        &bp,
        abs_tol,
        rel_tol,
    )
}

/// Composite trapezoid rule on arbitrary sample points.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2).zip(y.windows(2)).map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1])).sum()
}

/// Running integral from t[0] using the trapezoid rule with the
/// derivative endpoint correction on every interval (Hermite rule):
/// ∫ ≈ h(y₀+y₁)/2 − h²(y₁′−y₀′)/12.
pub fn cumulative_corrected(t: &[f64], y: &[f64], dy: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..t.len() {
        let h = t[i] - t[i - 1];
        acc += 0.5 * h * (y[i] + y[i - 1]) - h * h * (dy[i] - dy[i - 1]) / 12.0;
        out.push(acc);
    }
    out
}

/// Moments ∫_{-h}^{h} y^k e^{iωy} dy for k = 0, 1, 2.
fn filon_moments(omega: f64, h: f64) -> [Complex64; 3] {
    let th = omega * h;
    if th.abs() < 1.0 {
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let mut fact_even = 1.0; // (2n)!
        let mut pow = 1.0; // θ^{2n}
        for n in 0..14 {
            let nn = n as f64;
            let fact_odd = fact_even * (2.0 * nn + 1.0);
            let sgn = if n % 2 == 0 { 1.0 } else { -1.0 };
            m0 += sgn * pow / fact_odd;
            m1 += sgn * pow * th / (fact_odd * (2.0 * nn + 3.0));
            m2 += sgn * pow / (fact_even * (2.0 * nn + 3.0));
            pow *= th * th;
            fact_even = fact_odd * (2.0 * nn + 2.0);
        }
        [
            Complex64::new(2.0 * h * m0, 0.0),
            Complex64::new(0.0, 2.0 * h * h * m1),
            Complex64::new(2.0 * h * h * h * m2, 0.0),
        ]
    } else {
        let (s, c) = th.sin_cos();
        let w = omega;
        [
            Complex64::new(2.0 * s / w, 0.0),
            Complex64::new(0.0, 2.0 * (s / (w * w) - h * c / w)),
            Complex64::new(2.0 * (h * h * s / w + 2.0 * h * c / (w * w) - 2.0 * s / (w * w * w)), 0.0),
        ]
    }
}

/// Filon–Simpson rule for ∫_a^b g(x) e^{iωx} dx with g interpolated
/// quadratically on `panels` equal panels (2·panels + 1 samples of g).
pub fn filon(g: impl Fn(f64) -> Complex64, a: f64, b: f64, omega: f64, panels: usize) -> Complex64 {
    let h = (b - a) / (2 * panels) as f64;
    let m = filon_moments(omega, h);
    let mut total = Complex64::new(0.0, 0.0);
    let mut g_left = g(a);
    for p in 0..panels {
        let c = a + (2 * p + 1) as f64 * h;
        let gm = g(c);
        let gr = g(c + h);
        // g(c + y) = α + βy + γy²
        let alpha = gm;
        let beta = (gr - g_left) / (2.0 * h);
        let gamma = (gr + g_left - gm * 2.0) / (2.0 * h * h);
        let phase = Complex64::from_polar(1.0, omega * c);
        total += phase * (alpha * m[0] + beta * m[1] + gamma * m[2]);
        g_left = gr;
    }
    total
}
