//! Bottom profiles `x2 = G(x1)` of the channel.
//!
//! Every profile equals `-pi` exactly outside `[-R0, R0]` and exposes its
//! first and second derivatives in closed form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Depth of the flat ends.
pub const FLAT_DEPTH: f64 = PI;

/// A Gaussian bump is cut off (set exactly flat) beyond this many widths from
/// its center; the neglected tail is below `amplitude * 5e-19`.
pub const GAUSSIAN_CUTOFF_WIDTHS: f64 = 6.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topography {
    /// `G = -pi` everywhere. `support_radius` only fixes the bookkeeping
    /// radius `R0` used to place sources and fundamental intervals.
    Flat {
        #[serde(default = "default_flat_radius")]
        support_radius: f64,
    },
    /// `G(x) = -pi + A exp(-((x - x_c)/w)^2)`, truncated to exactly `-pi`
    /// beyond `6.5 w` from the center.
    GaussianBump {
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `G(x) = -pi + sum_i a_i B3((x - start)/spacing - i)` with the cardinal
    /// cubic B-spline `B3`; globally C^2 and compactly supported.
    Spline {
        start: f64,
        spacing: f64,
        coeffs: Vec<f64>,
    },
}

fn default_flat_radius() -> f64 {
    2.0
}

fn one() -> f64 {
    1.0
}

impl Topography {
    pub fn flat() -> Self {
        Topography::Flat {
            support_radius: default_flat_radius(),
        }
    }

    pub fn gaussian(amplitude: f64, width: f64, center: f64) -> Self {
        Topography::GaussianBump {
            amplitude,
            width,
            center,
        }
    }

    pub fn is_flat(&self) -> bool {
        match self {
            Topography::Flat { .. } => true,
            Topography::GaussianBump { amplitude, .. } => *amplitude == 0.0,
            Topography::Spline { coeffs, .. } => coeffs.iter().all(|a| *a == 0.0),
        }
    }

    /// Checks parameters and the no-pinching condition `G < 0`.
    pub fn validate(&self) -> Result<()> {
        match self {
            Topography::Flat { support_radius } => {
                if !(support_radius.is_finite() && *support_radius > 0.0) {
                    return Err(Error::Domain(format!(
                        "flat support_radius must be positive, got {support_radius}"
                    )));
                }
            }
            Topography::GaussianBump {
                amplitude,
                width,
                center,
            } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::Domain(format!("gaussian width must be positive, got {width}")));
                }
                if !amplitude.is_finite() || !center.is_finite() {
                    return Err(Error::Domain("gaussian parameters must be finite".into()));
                }
                if *amplitude >= FLAT_DEPTH {
                    return Err(Error::Domain(format!(
                        "gaussian amplitude {amplitude} closes the channel (needs A < pi)"
                    )));
                }
            }
            Topography::Spline {
                start,
                spacing,
                coeffs,
            } => {
                if !(spacing.is_finite() && *spacing > 0.0) || !start.is_finite() {
                    return Err(Error::Domain("spline needs finite start and positive spacing".into()));
                }
                if coeffs.is_empty() || coeffs.iter().any(|a| !a.is_finite()) {
                    return Err(Error::Domain("spline needs at least one finite coefficient".into()));
                }
                let (lo, hi) = self.bump_interval();
                let n = 4000;
                for i in 0..=n {
                    let x = lo + (hi - lo) * i as f64 / n as f64;
                    if self.depth_profile(x) >= 0.0 {
                        return Err(Error::Domain(format!("spline bottom reaches the surface near x1 = {x:.4}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Interval outside of which the profile is exactly flat.
    pub fn bump_interval(&self) -> (f64, f64) {
        match self {
            Topography::Flat { support_radius } => (-support_radius, *support_radius),
            Topography::GaussianBump { width, center, .. } => {
                let r = GAUSSIAN_CUTOFF_WIDTHS * width;
                (center - r, center + r)
            }
            Topography::Spline {
                start,
                spacing,
                coeffs,
            } => (
                start - 2.0 * spacing,
                start + (coeffs.len() as f64 + 1.0) * spacing,
            ),
        }
    }

    /// `R0`: `G = -pi` for `|x1| >= R0`.
    pub fn support_radius(&self) -> f64 {
        let (lo, hi) = self.bump_interval();
        lo.abs().max(hi.abs())
    }

    /// Upper bound on `|G|`.
    pub fn max_depth(&self) -> f64 {
        match self {
            Topography::Flat { .. } => FLAT_DEPTH,
            Topography::GaussianBump { amplitude, .. } => FLAT_DEPTH + amplitude.abs(),
            Topography::Spline { coeffs, .. } => {
                // B3 is a partition of unity bounded by 2/3
                FLAT_DEPTH + coeffs.iter().map(|a| a.abs()).sum::<f64>()
            }
        }
    }

    pub fn depth_profile(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    pub fn slope(&self, x: f64) -> f64 {
        self.eval(x).1
    }

    pub fn curvature(&self, x: f64) -> f64 {
        self.eval(x).2
    }

    /// `(G, G', G'')` at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        match self {
            Topography::Flat { .. } => (-FLAT_DEPTH, 0.0, 0.0),
            Topography::GaussianBump {
                amplitude,
                width,
                center,
            } => {
                let t = (x - center) / width;
                if t.abs() >= GAUSSIAN_CUTOFF_WIDTHS {
                    return (-FLAT_DEPTH, 0.0, 0.0);
                }
                let e = amplitude * (-t * t).exp();
                let d1 = -2.0 * t / width * e;
                let d2 = (4.0 * t * t - 2.0) / (width * width) * e;
                (-FLAT_DEPTH + e, d1, d2)
            }
            Topography::Spline {
                start,
                spacing,
                coeffs,
            } => {
                let u = (x - start) / spacing;
                let (mut g, mut d1, mut d2) = (0.0, 0.0, 0.0);
                let first = (u - 2.0).ceil().max(0.0) as usize;
                let last = ((u + 2.0).floor() as i64).min(coeffs.len() as i64 - 1);
                if last >= first as i64 {
                    for (i, a) in coeffs.iter().enumerate().take(last as usize + 1).skip(first) {
                        let (b0, b1, b2) = cubic_bspline(u - i as f64);
                        g += a * b0;
                        d1 += a * b1;
                        d2 += a * b2;
                    }
                }
                (-FLAT_DEPTH + g, d1 / spacing, d2 / (spacing * spacing))
            }
        }
    }

    /// Short stable fingerprint of the profile parameters.
    pub fn hash(&self) -> String {
        let text = serde_json_like(self);
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }
}

fn serde_json_like(topo: &Topography) -> String {
    match topo {
        Topography::Flat { support_radius } => format!("flat;{support_radius:e}"),
        Topography::GaussianBump {
            amplitude,
            width,
            center,
        } => format!("gaussian;{amplitude:e};{width:e};{center:e}"),
        Topography::Spline {
            start,
            spacing,
            coeffs,
        } => {
            let mut s = format!("spline;{start:e};{spacing:e}");
            for a in coeffs {
                s.push_str(&format!(";{a:e}"));
            }
            s
        }
    }
}

/// Cardinal cubic B-spline on `[-2, 2]` with its first two derivatives.
fn cubic_bspline(t: f64) -> (f64, f64, f64) {
    let a = t.abs();
    let s = t.signum();
    if a >= 2.0 {
        (0.0, 0.0, 0.0)
    } else if a >= 1.0 {
        let r = 2.0 - a;
        (r * r * r / 6.0, -s * r * r / 2.0, r)
    } else {
        (
            (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0,
            s * (-2.0 * a + 1.5 * a * a),
            -2.0 + 3.0 * a,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(topo: &Topography, x: f64) -> (f64, f64) {
        let h = 1e-5;
        let d1 = (topo.depth_profile(x + h) - topo.depth_profile(x - h)) / (2.0 * h);
        let d2 = (topo.slope(x + h) - topo.slope(x - h)) / (2.0 * h);
        (d1, d2)
    }

    #[test]
    fn flat_outside_support() {
        let topos = [
            Topography::gaussian(0.5, 1.0, 0.3),
            Topography::Spline {
                start: -1.0,
                spacing: 0.7,
                coeffs: vec![0.3, -0.2, 0.4],
            },
        ];
        for topo in &topos {
            let r0 = topo.support_radius();
            for x in [r0, r0 + 0.1, -r0, -r0 - 3.0] {
                assert_eq!(topo.depth_profile(x), -PI);
                assert_eq!(topo.slope(x), 0.0);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let topos = [
            Topography::gaussian(0.5, 1.3, -0.4),
            Topography::Spline {
                start: -1.0,
                spacing: 0.7,
                coeffs: vec![0.3, -0.2, 0.4, 0.1],
            },
        ];
        for topo in &topos {
            for i in 0..200 {
                let x = -4.0 + 8.0 * i as f64 / 199.0;
                let (d1, d2) = fd(topo, x);
                assert!((d1 - topo.slope(x)).abs() < 1e-7, "{topo:?} G' at {x}");
                assert!((d2 - topo.curvature(x)).abs() < 1e-6, "{topo:?} G'' at {x}");
            }
        }
    }

    #[test]
    fn spline_is_continuous_in_second_derivative_at_knots() {
        let topo = Topography::Spline {
            start: 0.0,
            spacing: 1.0,
            coeffs: vec![0.2, 0.5, -0.1],
        };
        for knot in -2..=4 {
            let x = knot as f64;
            let e = 1e-9;
            assert!((topo.curvature(x - e) - topo.curvature(x + e)).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_pinched_channel() {
        assert!(Topography::gaussian(3.5, 1.0, 0.0).validate().is_err());
        assert!(Topography::gaussian(0.5, -1.0, 0.0).validate().is_err());
        assert!(Topography::gaussian(0.5, 1.0, 0.0).validate().is_ok());
    }

    #[test]
    fn hash_distinguishes_parameters() {
        let a = Topography::gaussian(0.5, 1.0, 0.0).hash();
        let b = Topography::gaussian(0.5, 1.0, 0.1).hash();
        assert_ne!(a, b);
        assert_eq!(a, Topography::gaussian(0.5, 1.0, 0.0).hash());
        assert_eq!(a.len(), 16);
    }
}
