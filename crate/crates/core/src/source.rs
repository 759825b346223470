//! Compactly supported forcing terms and the particular solution
//! `U0 = 1/4 int int f dy+ dy-` of `P(lambda) U0 = f`.
//!
//! With `y+- = +-x1/lambda + x2/s2`, `s2 = sqrt(1 - lambda^2)`, the operator
//! `P(lambda) = -lambda^2 d1^2 + (1 - lambda^2) d2^2` equals `4 d+ d-`, and
//! the quadrant `{y' < y}` is the downward cone `x2' < x2 - c |x1' - x1|`.
//! Hence `U0(x) = (1 / (2 lambda s2)) int_{cone(x) cap Omega} f dx'`.

use faer::c64;

use crate::error::{Error, Result, Warning};
use crate::geometry::Channel;
use crate::quadrature::rule;

/// Exponent of the polynomial bump `(1 - t^2)^p`.
pub const BUMP_POWER: i32 = 8;

/// Default quadrature order per panel.
pub const U0_ORDER: usize = 32;

pub const U0_REFINE_TOL: f64 = 1e-9;

/// `(1 - t^2)^p` on `|t| < 1`, zero outside.
pub fn poly_bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - t * t).powi(BUMP_POWER)
    }
}

/// `int_0^t (1 - u^2)^p du`, with `t` clamped to `[-1, 1]`.
fn poly_bump_primitive(t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    let p = BUMP_POWER as u32;
    let mut binom = 1.0;
    let mut sum = 0.0;
    let t2 = t * t;
    let mut tp = t;
    for j in 0..=p {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * binom * tp / (2 * j + 1) as f64;
        binom = binom * (p - j) as f64 / (j + 1) as f64;
        tp *= t2;
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Vertical {
    /// `sin(m x2)`, vanishing on the flat top and bottom.
    Sine { mode: u32 },
    /// Polynomial bump centered at `center` with half-width `radius`.
    Bump { center: f64, radius: f64 },
}

/// `amplitude * bump((x1 - center) / radius) * vertical(x2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub amplitude: c64,
    pub center: f64,
    pub radius: f64,
    pub vertical: Vertical,
}

impl Component {
    fn vertical_value(&self, x2: f64) -> f64 {
        match self.vertical {
            Vertical::Sine { mode } => (mode as f64 * x2).sin(),
            Vertical::Bump { center, radius } => poly_bump((x2 - center) / radius),
        }
    }

    /// `int_lo^hi vertical(t) dt`.
    fn vertical_integral(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        match self.vertical {
            Vertical::Sine { mode } => {
                let m = mode as f64;
                ((m * lo).cos() - (m * hi).cos()) / m
            }
            Vertical::Bump { center, radius } => {
                radius * (poly_bump_primitive((hi - center) / radius) - poly_bump_primitive((lo - center) / radius))
            }
        }
    }

    /// Vertical extent, `None` below meaning "down to the bottom".
    fn vertical_range(&self) -> (Option<f64>, f64) {
        match self.vertical {
            Vertical::Sine { .. } => (None, 0.0),
            Vertical::Bump { center, radius } => (Some(center - radius), center + radius),
        }
    }

    pub fn eval(&self, x1: f64, x2: f64) -> c64 {
        let h = poly_bump((x1 - self.center) / self.radius);
        if h == 0.0 {
            return c64::new(0.0, 0.0);
        }
        self.amplitude * (h * self.vertical_value(x2))
    }

    fn x1_range(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }
}

/// A forcing term: a finite sum of separable polynomial bumps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceTerm {
    pub components: Vec<Component>,
}

impl SourceTerm {
    pub fn zero() -> Self {
        SourceTerm::default()
    }

    /// `sin(m x2) * bump((x1 - center)/radius)`.
    pub fn mode_bump(mode: u32, center: f64, radius: f64) -> Self {
        SourceTerm {
            components: vec![Component {
                amplitude: c64::new(1.0, 0.0),
                center,
                radius,
                vertical: Vertical::Sine { mode },
            }],
        }
    }

    pub fn blob(amplitude: c64, x1: f64, r1: f64, x2: f64, r2: f64) -> Self {
        SourceTerm {
            components: vec![Component {
                amplitude,
                center: x1,
                radius: r1,
                vertical: Vertical::Bump { center: x2, radius: r2 },
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.amplitude == c64::new(0.0, 0.0))
    }

    pub fn scaled(&self, a: c64) -> Self {
        SourceTerm {
            components: self
                .components
                .iter()
                .map(|c| Component {
                    amplitude: c.amplitude * a,
                    ..*c
                })
                .collect(),
        }
    }

    pub fn plus(&self, other: &SourceTerm) -> Self {
        let mut components = self.components.clone();
        components.extend(other.components.iter().copied());
        SourceTerm { components }
    }

    pub fn eval(&self, x1: f64, x2: f64) -> c64 {
        self.components.iter().map(|c| c.eval(x1, x2)).sum()
    }

    /// Horizontal extent `[a, b]` of the support (empty source gives `(0, 0)`).
    pub fn x1_support(&self) -> (f64, f64) {
        let live = self.components.iter().filter(|c| c.amplitude != c64::new(0.0, 0.0));
        live.fold(None, |acc: Option<(f64, f64)>, c| {
            let (a, b) = c.x1_range();
            Some(match acc {
                None => (a, b),
                Some((lo, hi)) => (lo.min(a), hi.max(b)),
            })
        })
        .unwrap_or((0.0, 0.0))
    }

    /// Checks bump parameters and that the support stays within
    /// `|x1| <= R0 + 1` and inside the channel.
    pub fn validate(&self, channel: &Channel) -> Result<()> {
        let limit = channel.params.r0 + 1.0;
        for c in &self.components {
            if !(c.radius > 0.0) || !c.center.is_finite() || !c.amplitude.re.is_finite() || !c.amplitude.im.is_finite() {
                return Err(Error::Domain(format!("invalid source component {c:?}")));
            }
            let (a, b) = c.x1_range();
            if a < -limit || b > limit {
                return Err(Error::Support(format!(
                    "source support [{a}, {b}] exceeds |x1| <= R0 + 1 = {limit}"
                )));
            }
            if let Vertical::Bump { center, radius } = c.vertical {
                if !(radius > 0.0) || center + radius > 0.0 {
                    return Err(Error::Domain(format!("vertical bump {c:?} must lie below x2 = 0")));
                }
            }
        }
        Ok(())
    }

    /// `U0(x1, x2)`.
    pub fn u0(&self, channel: &Channel, x1: f64, x2: f64) -> c64 {
        self.u0_with_order(channel, x1, x2, U0_ORDER)
    }

    pub fn u0_with_order(&self, channel: &Channel, x1: f64, x2: f64, order: usize) -> c64 {
        if self.components.is_empty() {
            return c64::new(0.0, 0.0);
        }
        let c = channel.c();
        let Some((s_l, s_r)) = cone_feet(channel, x1, x2) else {
            return c64::new(0.0, 0.0);
        };
        let gl = rule(order);
        let scale = 1.0 / (2.0 * channel.lambda() * (1.0 - channel.lambda().powi(2)).sqrt());
        let mut total = c64::new(0.0, 0.0);
        for comp in &self.components {
            let (ca, cb) = comp.x1_range();
            let (a, b) = (s_l.max(ca), s_r.min(cb));
            if a >= b {
                continue;
            }
            let (y_lo, y_hi) = comp.vertical_range();
            let mut breaks = vec![a, b, x1];
            for level in [Some(y_hi), y_lo].into_iter().flatten() {
                let d = (x2 - level) / c;
                if d > 0.0 {
                    breaks.push(x1 - d);
                    breaks.push(x1 + d);
                }
            }
            breaks.retain(|t| *t >= a && *t <= b);
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let column = |t: f64| {
                let top = (x2 - c * (t - x1).abs()).min(y_hi);
                let bottom = channel.topo.depth_profile(t).max(y_lo.unwrap_or(f64::NEG_INFINITY));
                poly_bump((t - comp.center) / comp.radius) * comp.vertical_integral(bottom, top)
            };
            let mut acc = 0.0;
            for w in breaks.windows(2) {
                acc += gl.integrate(w[0], w[1], column);
            }
            total += comp.amplitude * acc;
        }
        total * scale
    }

    /// Characteristic derivatives `(d+ U0, d- U0)` as integrals of `f` along
    /// the two cone edges through `(x1, x2)`.
    pub fn u0_char_derivs(&self, channel: &Channel, x1: f64, x2: f64) -> (c64, c64) {
        self.u0_char_derivs_with_order(channel, x1, x2, U0_ORDER)
    }

    pub fn u0_char_derivs_with_order(&self, channel: &Channel, x1: f64, x2: f64, order: usize) -> (c64, c64) {
        let zero = c64::new(0.0, 0.0);
        if self.components.is_empty() {
            return (zero, zero);
        }
        let c = channel.c();
        let Some((s_l, s_r)) = cone_feet(channel, x1, x2) else {
            return (zero, zero);
        };
        let gl = rule(order);
        let scale = 1.0 / (2.0 * channel.lambda());
        let (mut plus, mut minus) = (zero, zero);
        for comp in &self.components {
            let (ca, cb) = comp.x1_range();
            let (y_lo, y_hi) = comp.vertical_range();
            let levels: Vec<f64> = [Some(y_hi), y_lo].into_iter().flatten().collect();
            // right edge x2' = x2 - c (t - x1) for t in [x1, s_r]
            let edge = |a: f64, b: f64, sign: f64| -> c64 {
                let (a, b) = (a.max(ca), b.min(cb));
                if a >= b {
                    return zero;
                }
                let mut breaks = vec![a, b];
                for &level in &levels {
                    breaks.push(x1 + sign * (x2 - level) / c);
                }
                breaks.retain(|t| *t >= a && *t <= b);
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
                let f = |t: f64| {
                    let h = x2 - sign * c * (t - x1);
                    if h > y_hi || y_lo.is_some_and(|lo| h < lo) {
                        0.0
                    } else {
                        poly_bump((t - comp.center) / comp.radius) * comp.vertical_value(h)
                    }
                };
                let mut acc = 0.0;
                for w in breaks.windows(2) {
                    acc += gl.integrate(w[0], w[1], f);
                }
                comp.amplitude * acc
            };
            plus += edge(x1, s_r, 1.0);
            minus += edge(s_l, x1, -1.0);
        }
        (plus * scale, minus * scale)
    }

    /// `(d1 U0, d2 U0)`.
    pub fn u0_gradient(&self, channel: &Channel, x1: f64, x2: f64) -> (c64, c64) {
        let lambda = channel.lambda();
        let s2 = (1.0 - lambda * lambda).sqrt();
        let (p, m) = self.u0_char_derivs(channel, x1, x2);
        ((p - m) / lambda, (p + m) / s2)
    }

    /// Sup-norm change of `U0` when the quadrature order is doubled, over
    /// the given points.
    pub fn u0_refinement_change(&self, channel: &Channel, points: &[(f64, f64)]) -> (f64, Option<Warning>) {
        let change = points
            .iter()
            .map(|&(a, b)| (self.u0_with_order(channel, a, b, 32) - self.u0_with_order(channel, a, b, 64)).norm())
            .fold(0.0, f64::max);
        let warning = (change > U0_REFINE_TOL).then(|| {
            let w = Warning::Quadrature { what: "U0", change };
            log::warn!("{w}");
            w
        });
        (change, warning)
    }
}

/// Abscissae where the two edges of the downward cone from `(x1, x2)` meet
/// the bottom.
pub fn cone_feet(channel: &Channel, x1: f64, x2: f64) -> Option<(f64, f64)> {
    let c = channel.c();
    let s_l = channel.gamma_minus(x1 - x2 / c).ok()?;
    let s_r = channel.gamma_plus(x1 + x2 / c).ok()?;
    (s_r > s_l).then_some((s_l, s_r))
}
