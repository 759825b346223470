//! Gauss-Legendre rules and uniform cubic Hermite tables.

use std::sync::OnceLock;

use faer::c64;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Rule { nodes, weights }
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate<T>(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> T) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = T::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(mid + half * x) * (w * half);
        }
        acc
    }
}

/// Cached rules of common orders.
pub fn rule(n: usize) -> &'static Rule {
    static R16: OnceLock<Rule> = OnceLock::new();
    static R32: OnceLock<Rule> = OnceLock::new();
    static R64: OnceLock<Rule> = OnceLock::new();
    match n {
        16 => R16.get_or_init(|| Rule::new(16)),
        32 => R32.get_or_init(|| Rule::new(32)),
        64 => R64.get_or_init(|| Rule::new(64)),
        _ => panic!("no cached Gauss-Legendre rule of order {n}"),
    }
}

/// Piecewise cubic Hermite interpolant on uniform nodes `t0 + i h`.
#[derive(Debug, Clone)]
pub struct HermiteTable {
    pub t0: f64,
    pub h: f64,
    pub values: Vec<c64>,
    pub derivs: Vec<c64>,
}

impl HermiteTable {
    pub fn new(t0: f64, h: f64, values: Vec<c64>, derivs: Vec<c64>) -> Self {
        assert_eq!(values.len(), derivs.len());
        assert!(values.len() >= 2);
        HermiteTable { t0, h, values, derivs }
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.h * (self.values.len() - 1) as f64
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t_end()
    }

    /// Value and derivative; `None` outside the tabulated range.
    pub fn eval(&self, t: f64) -> Option<(c64, c64)> {
        if !self.contains(t) {
            return None;
        }
        let u = (t - self.t0) / self.h;
        let i = (u.floor() as usize).min(self.values.len() - 2);
        let s = u - i as f64;
        let (p0, p1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.derivs[i] * self.h, self.derivs[i + 1] * self.h);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let v = p0 * h00 + m0 * h10 + p1 * h01 + m1 * h11;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        let d = (p0 * d00 + m0 * d10 + p1 * d01 + m1 * d11) / self.h;
        Some((v, d))
    }
}
