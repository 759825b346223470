//! Characteristic geometry of the channel: slopes, reflection involutions,
//! the chess billiard map and its periodization to a circle map.
//!
//! Two coordinates are used on the upper boundary: the abscissa `x1`, and
//! `theta = c * x1`, in which one bounce over a flat bottom is a shift by
//! exactly `2 pi`.

use std::f64::consts::PI;

use crate::circle::CircleDiffeo;
use crate::error::{Error, Result};
use crate::topography::{Topography, FLAT_DEPTH};

const ROOT_TOL: f64 = 1e-13;
const ROOT_MAX_ITER: usize = 200;
pub const DEFAULT_BOUNCE_CAP: usize = 1_000_000;

/// Characteristic slope `c(lambda) = sqrt(1 - lambda^2) / lambda`.
pub fn char_slope(lambda: f64) -> f64 {
    (1.0 - lambda * lambda).sqrt() / lambda
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub lambda: f64,
    pub c: f64,
    /// Flat-region threshold in `x1`.
    pub m: f64,
    pub r0: f64,
    pub max_slope: f64,
    pub subcritical_margin: f64,
}

impl ChannelParams {
    /// Replaces the default threshold `M`; it must still exceed `R0 + 3 pi / c`.
    pub fn with_threshold(mut self, m: f64) -> Result<Self> {
        if !(m >= self.r0 + 3.0 * PI / self.c) {
            return Err(Error::Domain(format!(
                "M = {m} must be at least R0 + 3 pi / c = {}",
                self.r0 + 3.0 * PI / self.c
            )));
        }
        self.m = m;
        Ok(self)
    }
}

/// Global maximum of `|G'|` by a dense scan followed by golden-section
/// refinement around the best samples.
pub fn max_abs_slope(topo: &Topography) -> f64 {
    if topo.is_flat() {
        return 0.0;
    }
    let (lo, hi) = topo.bump_interval();
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| topo.slope(x).abs();
    let mut samples: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let x = lo + h * i as f64;
            (f(x), x)
        })
        .collect();
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = samples[0].0;
    for &(_, x) in samples.iter().take(8) {
        best = best.max(golden_max(&f, (x - h).max(lo), (x + h).min(hi)));
    }
    best
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..100 {
        if b - a < 1e-14 {
            break;
        }
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    f1.max(f2).max(f(a)).max(f(b))
}

/// Verifies `max|G'| < c(lambda)` and fixes the flat-region threshold.
pub fn check_subcritical(topo: &Topography, lambda: f64) -> Result<ChannelParams> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    topo.validate()?;
    let c = char_slope(lambda);
    let max_slope = max_abs_slope(topo);
    if max_slope >= c {
        return Err(Error::Supercritical { max_slope, c });
    }
    let r0 = topo.support_radius();
    Ok(ChannelParams {
        lambda,
        c,
        m: r0 + 3.0 * PI / c + 0.5,
        r0,
        max_slope,
        subcritical_margin: 1.0 - max_slope / c,
    })
}

/// A subcritical channel at a fixed frequency.
#[derive(Debug, Clone)]
pub struct Channel {
    pub topo: Topography,
    pub params: ChannelParams,
}

impl Channel {
    pub fn new(topo: Topography, lambda: f64) -> Result<Self> {
        let params = check_subcritical(&topo, lambda)?;
        Ok(Channel { topo, params })
    }

    pub fn c(&self) -> f64 {
        self.params.c
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    /// Root of `s + sign * G(s) / c = x1`.
    fn involution(&self, x1: f64, sign: f64) -> Result<f64> {
        let c = self.params.c;
        // over the flat part the root is explicit
        let flat = x1 + sign * FLAT_DEPTH / c;
        if flat.abs() >= self.params.r0 {
            return Ok(flat);
        }
        let f = |s: f64| {
            let (g, dg, _) = self.topo.eval(s);
            (s + sign * g / c - x1, 1.0 + sign * dg / c)
        };
        let pad = self.topo.max_depth() / c + 1.0;
        safeguarded_newton(f, x1 - pad, x1 + pad, flat)
    }

    /// `gamma^+`: bottom abscissa `s` with `s + G(s)/c = x1`.
    pub fn gamma_plus(&self, x1: f64) -> Result<f64> {
        self.involution(x1, 1.0)
    }

    /// `gamma^-`: bottom abscissa `s` with `s - G(s)/c = x1`.
    pub fn gamma_minus(&self, x1: f64) -> Result<f64> {
        self.involution(x1, -1.0)
    }

    /// Single bounce `b(x1) = x1 - 2 G(s)/c`, `s = gamma^+(x1)`.
    pub fn billiard(&self, x1: f64) -> Result<f64> {
        let s = self.gamma_plus(x1)?;
        Ok(x1 - 2.0 * self.topo.depth_profile(s) / self.params.c)
    }

    /// `b'(x1) = (c - G'(s)) / (c + G'(s))`.
    pub fn billiard_derivative(&self, x1: f64) -> Result<f64> {
        Ok(self.billiard_with_derivative(x1)?.1)
    }

    pub fn billiard_with_derivative(&self, x1: f64) -> Result<(f64, f64)> {
        let c = self.params.c;
        let s = self.gamma_plus(x1)?;
        let (g, dg, _) = self.topo.eval(s);
        Ok((x1 - 2.0 * g / c, (c - dg) / (c + dg)))
    }

    /// `b^{-1}(x1)`: solve `s - G(s)/c = x1`, return `s + G(s)/c`.
    pub fn billiard_inverse(&self, x1: f64) -> Result<f64> {
        let s = self.gamma_minus(x1)?;
        Ok(s + self.topo.depth_profile(s) / self.params.c)
    }

    pub fn billiard_inverse_with_derivative(&self, x1: f64) -> Result<(f64, f64)> {
        let c = self.params.c;
        let s = self.gamma_minus(x1)?;
        let (g, dg, _) = self.topo.eval(s);
        Ok((s + g / c, (c + dg) / (c - dg)))
    }

    /// Billiard map in theta units with its derivative.
    pub fn billiard_theta(&self, theta: f64) -> Result<(f64, f64)> {
        let c = self.params.c;
        let (x, d) = self.billiard_with_derivative(theta / c)?;
        Ok((c * x, d))
    }

    pub fn billiard_inverse_theta(&self, theta: f64) -> Result<(f64, f64)> {
        let c = self.params.c;
        let (x, d) = self.billiard_inverse_with_derivative(theta / c)?;
        Ok((c * x, d))
    }

    /// `b^k(theta)` for integer `k` (negative for inverse iterates) with the
    /// derivative of the iterate.
    pub fn iterate_theta(&self, theta: f64, k: i64) -> Result<(f64, f64)> {
        let (mut t, mut d) = (theta, 1.0);
        for _ in 0..k.unsigned_abs() {
            let (nt, nd) = if k > 0 {
                self.billiard_theta(t)?
            } else {
                self.billiard_inverse_theta(t)?
            };
            t = nt;
            d *= nd;
        }
        Ok((t, d))
    }

    pub fn fundamental_intervals(&self) -> Result<FundamentalIntervals> {
        find_fundamental_intervals(self, DEFAULT_BOUNCE_CAP)
    }
}

fn safeguarded_newton(f: impl Fn(f64) -> (f64, f64), mut a: f64, mut b: f64, guess: f64) -> Result<f64> {
    let (fa, _) = f(a);
    let (fb, _) = f(b);
    if fa > 0.0 || fb < 0.0 {
        return Err(Error::Convergence(format!(
            "root not bracketed on [{a}, {b}] (f = {fa}, {fb})"
        )));
    }
    let mut x = guess.clamp(a, b);
    for _ in 0..ROOT_MAX_ITER {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let mut next = x - fx / dfx;
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if (next - x).abs() <= ROOT_TOL || b - a <= ROOT_TOL {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Convergence(format!(
        "no convergence after {ROOT_MAX_ITER} iterations, bracket [{a}, {b}]"
    )))
}

/// `J_L = [theta0, theta0 + 2 pi)` and `J_R = b^N(J_L)` in theta units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalIntervals {
    pub theta0: f64,
    pub theta_r0: f64,
    pub n: usize,
}

pub fn find_fundamental_intervals(channel: &Channel, cap: usize) -> Result<FundamentalIntervals> {
    let cm = channel.params.c * channel.params.m;
    let theta0 = -cm - 2.0 * PI;
    let mut t = theta0;
    let mut n = 0;
    while t <= cm + 1e-9 {
        if n >= cap {
            return Err(Error::IterationLimit(format!(
                "more than {cap} bounces needed to cross the topography"
            )));
        }
        t = channel.billiard_theta(t)?.0;
        n += 1;
    }
    let end = channel.iterate_theta(theta0 + 2.0 * PI, n as i64)?.0;
    if ((end - t) - 2.0 * PI).abs() > 1e-10 {
        return Err(Error::Convergence(format!(
            "multi-bounce map is not periodic on J_L: b^N(theta0 + 2pi) - b^N(theta0) = {}",
            end - t
        )));
    }
    Ok(FundamentalIntervals {
        theta0,
        theta_r0: t,
        n,
    })
}

/// The multi-bounce map `J_L -> J_R` read as a degree-one circle map:
/// `beta(phi) = b^N(theta0 + phi) - theta_R0`.
#[derive(Debug, Clone)]
pub struct BilliardCircleMap<'a> {
    pub channel: &'a Channel,
    pub fi: FundamentalIntervals,
}

impl<'a> BilliardCircleMap<'a> {
    pub fn new(channel: &'a Channel, fi: FundamentalIntervals) -> Self {
        BilliardCircleMap { channel, fi }
    }

    fn lift(&self, phi: f64, forward: bool) -> (f64, f64) {
        let turns = (phi / (2.0 * PI)).floor();
        let phi = phi - 2.0 * PI * turns;
        let (start, target, k) = if forward {
            (self.fi.theta0, self.fi.theta_r0, self.fi.n as i64)
        } else {
            (self.fi.theta_r0, self.fi.theta0, -(self.fi.n as i64))
        };
        let (t, d) = self
            .channel
            .iterate_theta(start + phi, k)
            .expect("billiard iterates are defined on a subcritical channel");
        (t - target + 2.0 * PI * turns, d)
    }
}

impl CircleDiffeo for BilliardCircleMap<'_> {
    fn eval(&self, phi: f64) -> (f64, f64) {
        self.lift(phi, true)
    }

    fn eval_inverse(&self, psi: f64) -> (f64, f64) {
        self.lift(psi, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn gauss() -> Channel {
        Channel::new(Topography::gaussian(0.5, 1.0, 0.0), FRAC_1_SQRT_2).unwrap()
    }

    #[test]
    fn flat_involutions() {
        let ch = Channel::new(Topography::flat(), FRAC_1_SQRT_2).unwrap();
        assert!((ch.c() - 1.0).abs() < 1e-15);
        assert!((ch.gamma_plus(0.0).unwrap() - PI).abs() < 1e-12);
        assert!((ch.gamma_minus(0.0).unwrap() + PI).abs() < 1e-12);
        assert!((ch.gamma_minus(2.0 * PI).unwrap() - PI).abs() < 1e-12);
        assert!((ch.billiard(-7.0).unwrap() - (-7.0 + 2.0 * PI)).abs() < 1e-12);
        let ch2 = Channel::new(Topography::flat(), 1.0 / 5f64.sqrt()).unwrap();
        assert!((ch2.c() - 2.0).abs() < 1e-14);
        assert!((ch2.gamma_plus(5.0).unwrap() - (5.0 + PI / 2.0)).abs() < 1e-12);
        assert!((ch2.billiard(0.0).unwrap() - PI).abs() < 1e-12);
    }

    #[test]
    fn gaussian_slope_bound() {
        let p = check_subcritical(&Topography::gaussian(0.5, 1.0, 0.0), FRAC_1_SQRT_2).unwrap();
        let exact = 0.5 * (2.0 / std::f64::consts::E).sqrt();
        assert!((p.max_slope - exact).abs() < 1e-12);
        match check_subcritical(&Topography::gaussian(2.0, 1.0, 0.0), FRAC_1_SQRT_2) {
            Err(Error::Supercritical { max_slope, c }) => {
                assert!((max_slope - 1.7155).abs() < 1e-3);
                assert!((c - 1.0).abs() < 1e-12);
            }
            other => panic!("expected supercritical, got {other:?}"),
        }
        assert!(matches!(
            check_subcritical(&Topography::flat(), 1.2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn inverse_undoes_billiard() {
        let ch = gauss();
        for i in 0..50 {
            let x = -12.0 + 24.0 * i as f64 / 49.0;
            let y = ch.billiard(x).unwrap();
            assert!((ch.billiard_inverse(y).unwrap() - x).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_fundamental_intervals() {
        let ch = Channel {
            topo: Topography::flat(),
            params: ChannelParams {
                m: 3.0 * PI,
                ..check_subcritical(&Topography::flat(), FRAC_1_SQRT_2).unwrap()
            },
        };
        let fi = ch.fundamental_intervals().unwrap();
        assert_eq!(fi.n, 5);
        assert!((fi.theta0 + 5.0 * PI).abs() < 1e-12);
        assert!((fi.theta_r0 - (fi.theta0 + 10.0 * PI)).abs() < 1e-10);
    }

    #[test]
    fn circle_map_is_identity_when_flat() {
        let ch = Channel::new(Topography::flat(), 0.4).unwrap();
        let fi = ch.fundamental_intervals().unwrap();
        let map = BilliardCircleMap::new(&ch, fi);
        for i in 0..16 {
            let phi = 2.0 * PI * i as f64 / 16.0;
            let (b, d) = map.eval(phi);
            assert!((b - phi).abs() < 1e-10);
            assert!((d - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn circle_map_inverse() {
        let ch = gauss();
        let map = BilliardCircleMap::new(&ch, ch.fundamental_intervals().unwrap());
        assert!(map.eval(0.0).0.abs() < 1e-10);
        for i in 0..40 {
            let phi = -1.0 + 9.0 * i as f64 / 39.0;
            let (psi, d) = map.eval(phi);
            let (back, dinv) = map.eval_inverse(psi);
            assert!((back - phi).abs() < 1e-11);
            assert!((d * dinv - 1.0).abs() < 1e-11);
        }
    }
}
