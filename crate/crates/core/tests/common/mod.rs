//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use faer::c64;
use subwave::quadrature::Rule;
use subwave::topography::Topography;

/// Plain bisection for a sign change of `f` on `[a, b]`.
pub fn bisect(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut fa = f(a);
    assert!(fa * f(b) <= 0.0, "no sign change on [{a}, {b}]");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < 1e-15 * (1.0 + m.abs()) {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// Billiard map by bisection on the two level-set relations.
pub fn billiard_by_bisection(topo: &Topography, c: f64, x1: f64) -> f64 {
    let depth = topo.max_depth();
    let s = bisect(x1 - depth / c - 1.0, x1 + depth / c + 1.0, |s| s + topo.depth_profile(s) / c - x1);
    // up the other characteristic from (s, G(s))
    x1 - 2.0 * topo.depth_profile(s) / c
}

pub fn char_slope(lambda: f64) -> f64 {
    (1.0 - lambda * lambda).sqrt() / lambda
}

/// `int_a^b f` by composite Gauss-Legendre on `pieces` panels.
pub fn integrate(a: f64, b: f64, pieces: usize, f: impl Fn(f64) -> c64) -> c64 {
    let rule = Rule::new(20);
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|p| rule.integrate(a + h * p as f64, a + h * (p + 1) as f64, &f))
        .fold(c64::new(0.0, 0.0), |x, y| x + y)
}

/// Outgoing solution of `u'' + c^2 u = -chi / lambda^2` on the line,
/// `-(1/lambda^2) int e^{i c |x - s|} / (2 i c) chi(s) ds`, for `chi`
/// supported in `[a, b]`.
pub fn mode_oracle(lambda: f64, c: f64, a: f64, b: f64, chi: impl Fn(f64) -> f64, x: f64) -> c64 {
    let kern = |s: f64| c64::cis(c * (x - s).abs()) / c64::new(0.0, 2.0 * c) * chi(s) * (-1.0 / (lambda * lambda));
    if x > a && x < b {
        integrate(a, x, 16, kern) + integrate(x, b, 16, kern)
    } else {
        integrate(a, b, 32, kern)
    }
}

/// `(1 - t^2)^8` on `|t| < 1`.
pub fn bump8(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - t * t).powi(8)
    }
}

/// Dense complex Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<c64>>, mut b: Vec<c64>) -> Vec<c64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == c64::new(0.0, 0.0) {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = vec![c64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}
