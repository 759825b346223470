//! Mean-zero 1-forms on the circle `R / 2 pi Z` in a truncated Fourier basis,
//! and pullbacks by circle diffeomorphisms.
//!
//! Coefficients are stored for `k = -K..-1` followed by `k = 1..K`, so the
//! negative (`Pi^-`) block comes first. `k = 0` is never stored.

use std::f64::consts::PI;
use std::io::Write;

use faer::{c64, Col, Mat};
use rustfft::FftPlanner;

use crate::error::{Error, Result, Warning};

pub const ALIAS_THRESHOLD: f64 = 1e-8;
pub const PULLBACK_QUAD_TOL: f64 = 1e-10;

/// Orientation-preserving lift of a degree-one circle map together with its
/// derivative. `eval(phi + 2 pi) = eval(phi) + 2 pi`.
pub trait CircleDiffeo {
    fn eval(&self, phi: f64) -> (f64, f64);

    /// Inverse map and its derivative. The default inverts `eval` by
    /// bisection to `1e-13`.
    fn eval_inverse(&self, psi: f64) -> (f64, f64) {
        let shift = self.eval(0.0).0;
        let (mut a, mut b) = (psi - shift - 2.0 * PI, psi - shift + 2.0 * PI);
        while self.eval(a).0 > psi {
            a -= 2.0 * PI;
        }
        while self.eval(b).0 < psi {
            b += 2.0 * PI;
        }
        while b - a > 1e-13 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.eval(mid).0 < psi {
                a = mid;
            } else {
                b = mid;
            }
        }
        let x = 0.5 * (a + b);
        (x, 1.0 / self.eval(x).1)
    }
}

/// The inverse of a circle map viewed as a circle map.
pub struct Inverse<'a, D: ?Sized>(pub &'a D);

impl<D: CircleDiffeo + ?Sized> CircleDiffeo for Inverse<'_, D> {
    fn eval(&self, phi: f64) -> (f64, f64) {
        self.0.eval_inverse(phi)
    }

    fn eval_inverse(&self, psi: f64) -> (f64, f64) {
        self.0.eval(psi)
    }
}

/// Composition `outer(inner(phi))`.
pub struct Compose<'a, A: ?Sized, B: ?Sized> {
    pub outer: &'a A,
    pub inner: &'a B,
}

impl<A: CircleDiffeo + ?Sized, B: CircleDiffeo + ?Sized> CircleDiffeo for Compose<'_, A, B> {
    fn eval(&self, phi: f64) -> (f64, f64) {
        let (x, dx) = self.inner.eval(phi);
        let (y, dy) = self.outer.eval(x);
        (y, dx * dy)
    }
}

/// `phi -> phi + a`.
#[derive(Debug, Clone, Copy)]
pub struct Rotation(pub f64);

impl CircleDiffeo for Rotation {
    fn eval(&self, phi: f64) -> (f64, f64) {
        (phi + self.0, 1.0)
    }

    fn eval_inverse(&self, psi: f64) -> (f64, f64) {
        (psi - self.0, 1.0)
    }
}

/// `phi -> phi + a sin(m phi + p)`, a diffeomorphism for `|a m| < 1`.
#[derive(Debug, Clone, Copy)]
pub struct SineWobble {
    pub a: f64,
    pub m: f64,
    pub p: f64,
}

impl CircleDiffeo for SineWobble {
    fn eval(&self, phi: f64) -> (f64, f64) {
        let arg = self.m * phi + self.p;
        (phi + self.a * arg.sin(), 1.0 + self.a * self.m * arg.cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircleForm {
    k_max: usize,
    coeffs: Vec<c64>,
    /// `|v(0)|` removed when the form was built from samples.
    pub mean_defect: f64,
}

#[inline]
pub fn index_of(k: i64, k_max: usize) -> usize {
    debug_assert!(k != 0 && k.unsigned_abs() as usize <= k_max);
    if k < 0 {
        (k + k_max as i64) as usize
    } else {
        k_max + k as usize - 1
    }
}

#[inline]
pub fn freq_of(i: usize, k_max: usize) -> i64 {
    if i < k_max {
        i as i64 - k_max as i64
    } else {
        (i - k_max) as i64 + 1
    }
}

impl CircleForm {
    pub fn zero(k_max: usize) -> Self {
        CircleForm {
            k_max,
            coeffs: vec![c64::new(0.0, 0.0); 2 * k_max],
            mean_defect: 0.0,
        }
    }

    /// Builds a form from coefficients in storage order.
    pub fn from_coeffs(k_max: usize, coeffs: Vec<c64>) -> Self {
        assert_eq!(coeffs.len(), 2 * k_max, "coefficient vector must have length 2K");
        CircleForm {
            k_max,
            coeffs,
            mean_defect: 0.0,
        }
    }

    pub fn from_fn(k_max: usize, f: impl Fn(i64) -> c64) -> Self {
        let coeffs = (0..2 * k_max).map(|i| f(freq_of(i, k_max))).collect();
        CircleForm::from_coeffs(k_max, coeffs)
    }

    pub fn from_col(k_max: usize, col: &Col<c64>) -> Self {
        CircleForm::from_coeffs(k_max, (0..col.nrows()).map(|i| col[i]).collect())
    }

    pub fn to_col(&self) -> Col<c64> {
        Col::from_fn(self.coeffs.len(), |i| self.coeffs[i])
    }

    /// Fourier coefficients of uniformly sampled values `v(2 pi m / n)`,
    /// truncated to `|k| <= K` with the mean removed.
    pub fn from_samples(values: &[c64], k_max: usize) -> Result<(Self, Option<Warning>)> {
        let n = values.len();
        if n < 4 * k_max + 4 {
            return Err(Error::Domain(format!(
                "{n} samples are too few for K = {k_max} (need at least {})",
                4 * k_max + 4
            )));
        }
        let mut buf = values.to_vec();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let scale = 1.0 / n as f64;
        let coef = |k: i64| buf[k.rem_euclid(n as i64) as usize] * scale;
        let mut form = CircleForm::from_fn(k_max, coef);
        form.mean_defect = buf[0].norm() * scale;
        let kept: f64 = form.coeffs.iter().map(|z| z.norm_sqr()).sum();
        let total: f64 = buf.iter().skip(1).map(|z| z.norm_sqr()).sum::<f64>() * scale * scale;
        let discarded = (total - kept).max(0.0);
        let warning = if total > 0.0 && discarded > ALIAS_THRESHOLD * total {
            let w = Warning::Alias {
                discarded_fraction: discarded / total,
            };
            log::warn!("{w}");
            Some(w)
        } else {
            None
        };
        Ok((form, warning))
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn coeffs(&self) -> &[c64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [c64] {
        &mut self.coeffs
    }

    pub fn coeff(&self, k: i64) -> c64 {
        if k == 0 || k.unsigned_abs() as usize > self.k_max {
            return c64::new(0.0, 0.0);
        }
        self.coeffs[index_of(k, self.k_max)]
    }

    pub fn set_coeff(&mut self, k: i64, value: c64) {
        let i = index_of(k, self.k_max);
        self.coeffs[i] = value;
    }

    pub fn frequencies(&self) -> impl Iterator<Item = i64> + '_ {
        (0..2 * self.k_max).map(move |i| freq_of(i, self.k_max))
    }

    /// Changes the truncation order, padding with zeros or dropping modes.
    pub fn resized(&self, k_max: usize) -> Self {
        CircleForm::from_fn(k_max, |k| self.coeff(k))
    }

    pub fn project(&self, sign: Sign) -> Self {
        let mut out = self.clone();
        for (i, z) in out.coeffs.iter_mut().enumerate() {
            let k = freq_of(i, self.k_max);
            let keep = match sign {
                Sign::Plus => k > 0,
                Sign::Minus => k < 0,
            };
            if !keep {
                *z = c64::new(0.0, 0.0);
            }
        }
        out.mean_defect = 0.0;
        out
    }

    /// Zeroes all modes with `|k| > band`.
    pub fn band_limited(&self, band: usize) -> Self {
        CircleForm::from_fn(self.k_max, |k| {
            if k.unsigned_abs() as usize <= band {
                self.coeff(k)
            } else {
                c64::new(0.0, 0.0)
            }
        })
    }

    /// `(sum_k |k|^{2s} |v(k)|^2)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.frequencies()
            .zip(&self.coeffs)
            .map(|(k, z)| (k.unsigned_abs() as f64).powf(2.0 * s) * z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `F(v) = 2 pi sum_k k |v(k)|^2`.
    pub fn quantum_flux(&self) -> f64 {
        2.0 * PI
            * self
                .frequencies()
                .zip(&self.coeffs)
                .map(|(k, z)| k as f64 * z.norm_sqr())
                .sum::<f64>()
    }

    /// `2 pi sum_k |v(k)|^2 / k`, the flux of the primitive of `v`.
    pub fn form_flux(&self) -> f64 {
        2.0 * PI
            * self
                .frequencies()
                .zip(&self.coeffs)
                .map(|(k, z)| z.norm_sqr() / k as f64)
                .sum::<f64>()
    }

    pub fn l2_coeff_norm(&self) -> f64 {
        self.sobolev_norm(0.0)
    }

    pub fn eval(&self, theta: f64) -> c64 {
        self.frequencies()
            .zip(&self.coeffs)
            .map(|(k, z)| z * c64::cis(k as f64 * theta))
            .sum()
    }

    /// Values at `2 pi m / n`, `m = 0..n`.
    pub fn to_samples(&self, n: usize) -> Vec<c64> {
        assert!(n > 2 * self.k_max, "need more than 2K samples");
        let mut buf = vec![c64::new(0.0, 0.0); n];
        for (k, z) in self.frequencies().zip(&self.coeffs) {
            buf[k.rem_euclid(n as i64) as usize] = *z;
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        buf
    }

    /// `int_0^theta v`.
    pub fn antiderivative(&self, theta: f64) -> c64 {
        self.frequencies()
            .zip(&self.coeffs)
            .map(|(k, z)| z * (c64::cis(k as f64 * theta) - 1.0) / c64::new(0.0, k as f64))
            .sum()
    }

    /// Samples of `int_0^theta v` at `2 pi m / n`, `m = 0..n`.
    pub fn antiderivative_samples(&self, n: usize) -> Vec<c64> {
        let prim = CircleForm::from_fn(self.k_max, |k| self.coeff(k) / c64::new(0.0, k as f64));
        let offset: c64 = prim.coeffs.iter().sum();
        prim.to_samples(n).into_iter().map(|z| z - offset).collect()
    }

    pub fn scale(&self, a: c64) -> Self {
        CircleForm::from_coeffs(self.k_max, self.coeffs.iter().map(|z| z * a).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.k_max, other.k_max);
        CircleForm::from_coeffs(
            self.k_max,
            self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(c64::new(-1.0, 0.0)))
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// CSV with columns `k,re,im`, ascending `k`, `k = 0` omitted.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "k,re,im")?;
        for (k, z) in self.frequencies().zip(&self.coeffs) {
            writeln!(w, "{k},{:.17e},{:.17e}", z.re, z.im)?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (line_no, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let parse_err = || Error::Format(format!("bad circle form row {}: {line}", line_no + 1));
            if parts.len() != 3 {
                return Err(parse_err());
            }
            let k: i64 = parts[0].trim().parse().map_err(|_| parse_err())?;
            let re: f64 = parts[1].trim().parse().map_err(|_| parse_err())?;
            let im: f64 = parts[2].trim().parse().map_err(|_| parse_err())?;
            entries.push((k, c64::new(re, im)));
        }
        let k_max = entries.iter().map(|(k, _)| k.unsigned_abs() as usize).max().unwrap_or(0);
        if k_max == 0 || entries.len() != 2 * k_max || entries.iter().any(|(k, _)| *k == 0) {
            return Err(Error::Format("circle form CSV must list k = -K..-1, 1..K".into()));
        }
        let mut form = CircleForm::zero(k_max);
        for (k, z) in entries {
            form.set_coeff(k, z);
        }
        Ok(form)
    }
}

/// Finite section of `v -> (phi^* v)(theta) = v(phi(theta)) phi'(theta)`.
#[derive(Debug, Clone)]
pub struct PullbackMatrix {
    pub k_max: usize,
    pub entries: Mat<c64>,
}

impl PullbackMatrix {
    pub fn identity(k_max: usize) -> Self {
        PullbackMatrix {
            k_max,
            entries: Mat::identity(2 * k_max, 2 * k_max),
        }
    }

    pub fn entry(&self, j: i64, k: i64) -> c64 {
        self.entries[(index_of(j, self.k_max), index_of(k, self.k_max))]
    }

    pub fn apply(&self, v: &CircleForm) -> CircleForm {
        assert_eq!(v.k_max(), self.k_max);
        let out = &self.entries * v.to_col();
        CircleForm::from_col(self.k_max, &out)
    }
}

/// Raw trapezoid assembly with `n_quad` nodes.
pub fn pullback_entries(map: &(impl CircleDiffeo + ?Sized), k_max: usize, n_quad: usize) -> Mat<c64> {
    let n = n_quad;
    let nodes: Vec<(f64, f64)> = (0..n).map(|m| map.eval(2.0 * PI * m as f64 / n as f64)).collect();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let dim = 2 * k_max;
    let mut out = Mat::<c64>::zeros(dim, dim);
    let mut buf = vec![c64::new(0.0, 0.0); n];
    let scale = 1.0 / n as f64;
    for col in 0..dim {
        let k = freq_of(col, k_max) as f64;
        for (b, (phi, dphi)) in buf.iter_mut().zip(&nodes) {
            *b = c64::cis(k * phi) * dphi;
        }
        fft.process(&mut buf);
        for row in 0..dim {
            let j = freq_of(row, k_max);
            out[(row, col)] = buf[j.rem_euclid(n as i64) as usize] * scale;
        }
    }
    out
}

/// Assembles the pullback matrix and checks it against a run with twice
/// the quadrature nodes.
pub fn assemble_pullback(
    map: &(impl CircleDiffeo + ?Sized),
    k_max: usize,
    n_quad: usize,
) -> Result<(PullbackMatrix, Option<Warning>)> {
    if n_quad < 8 * k_max {
        return Err(Error::Domain(format!(
            "n_quad = {n_quad} is below 8K = {}",
            8 * k_max
        )));
    }
    let coarse = pullback_entries(map, k_max, n_quad);
    let fine = pullback_entries(map, k_max, 2 * n_quad);
    let change = max_abs_diff(&coarse, &fine);
    let warning = (change > PULLBACK_QUAD_TOL).then(|| {
        let w = Warning::Quadrature {
            what: "pullback",
            change,
        };
        log::warn!("{w}");
        w
    });
    Ok((
        PullbackMatrix {
            k_max,
            entries: fine,
        },
        warning,
    ))
}

pub fn max_abs_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

/// Direct pointwise pullback of a form, re-projected with `n` samples.
pub fn pointwise_pullback(map: &(impl CircleDiffeo + ?Sized), v: &CircleForm, n: usize) -> Result<CircleForm> {
    let samples: Vec<c64> = (0..n)
        .map(|m| {
            let (phi, dphi) = map.eval(2.0 * PI * m as f64 / n as f64);
            v.eval(phi) * dphi
        })
        .collect();
    Ok(CircleForm::from_samples(&samples, v.k_max())?.0)
}
