//! The outgoing resolvent `u = R(lambda) f`.
//!
//! With `theta+- = c x1 +- x2` the solution is written
//!
//! ```text
//! u = U0 - omega(theta+) - g(theta-) + omega(theta-)
//! ```
//!
//! where `g = U0|_{x2=0}` and `omega` solves the cocycle relation
//! `omega(theta) = omega(b theta) - g(b theta)` (Dirichlet data on the bottom)
//! with `d omega = v_L` on `J_L`. The Neumann data `v_L`, `v_R` come from
//! the scattering solve with the transport source `bold g`.

use std::f64::consts::PI;

use faer::c64;

use crate::circle::{CircleForm, Sign};
use crate::error::{Error, Result, Warning};
use crate::geometry::{Channel, FundamentalIntervals};
use crate::grid::{Grid, WaveField};
use crate::quadrature::HermiteTable;
use crate::scattering::ScatteringAssembly;
use crate::source::SourceTerm;

pub const CONTINUITY_TOL: f64 = 1e-8;

/// Data on the surface, in theta units, that vanishes outside `support`.
pub trait SurfaceTrace: Sync {
    fn support(&self) -> (f64, f64);
    fn value(&self, theta: f64) -> c64;
    fn derivative(&self, theta: f64) -> c64;
}

/// `g(theta) = U0(theta / c, 0)` tabulated for cubic Hermite interpolation,
/// with exact derivatives from characteristic line integrals.
#[derive(Debug, Clone)]
pub struct TraceG {
    pub channel: Channel,
    pub source: SourceTerm,
    pub table: Option<HermiteTable>,
    pub support: (f64, f64),
    pub warnings: Vec<Warning>,
}

impl TraceG {
    /// Tabulates `g` with spacing `2 pi / nodes_per_period`.
    pub fn new(channel: &Channel, source: &SourceTerm, nodes_per_period: usize) -> Result<Self> {
        use rayon::prelude::*;
        source.validate(channel)?;
        let c = channel.c();
        let (a, b) = source.x1_support();
        if source.is_zero() {
            return Ok(TraceG {
                channel: channel.clone(),
                source: source.clone(),
                table: None,
                support: (0.0, 0.0),
                warnings: vec![],
            });
        }
        // the downward cone from (x1, 0) meets supp f iff gamma+(x1) > a and
        // gamma-(x1) < b
        let lo = c * (a + channel.topo.depth_profile(a) / c);
        let hi = c * (b - channel.topo.depth_profile(b) / c);
        let h = 2.0 * PI / nodes_per_period as f64;
        let n = ((hi - lo) / h).ceil() as usize + 1;
        let nodes: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        let s2 = (1.0 - channel.lambda().powi(2)).sqrt();
        let vals: Vec<(c64, c64)> = nodes
            .par_iter()
            .map(|&t| {
                let x1 = t / c;
                let (p, m) = source.u0_char_derivs(channel, x1, 0.0);
                (source.u0(channel, x1, 0.0), (p - m) / s2)
            })
            .collect();
        let probe: Vec<(f64, f64)> = nodes.iter().step_by(16).map(|&t| (t / c, 0.0)).collect();
        let (_, warning) = source.u0_refinement_change(channel, &probe);
        let table = HermiteTable::new(lo, h, vals.iter().map(|v| v.0).collect(), vals.iter().map(|v| v.1).collect());
        Ok(TraceG {
            channel: channel.clone(),
            source: source.clone(),
            support: (lo, table.t_end()),
            table: Some(table),
            warnings: warning.into_iter().collect(),
        })
    }

    /// `g'(theta)` from the line integrals, without interpolation.
    pub fn derivative_exact(&self, theta: f64) -> c64 {
        if self.table.is_none() || theta <= self.support.0 || theta >= self.support.1 {
            return c64::new(0.0, 0.0);
        }
        let c = self.channel.c();
        let s2 = (1.0 - self.channel.lambda().powi(2)).sqrt();
        let (p, m) = self.source.u0_char_derivs(&self.channel, theta / c, 0.0);
        (p - m) / s2
    }

    fn lookup(&self, theta: f64) -> (c64, c64) {
        match &self.table {
            Some(t) => t.eval(theta).unwrap_or_default(),
            None => Default::default(),
        }
    }
}

impl SurfaceTrace for TraceG {
    fn support(&self) -> (f64, f64) {
        self.support
    }

    fn value(&self, theta: f64) -> c64 {
        self.lookup(theta).0
    }

    fn derivative(&self, theta: f64) -> c64 {
        self.derivative_exact(theta)
    }
}

/// `bold g = -sum_{k=1}^N (b^k)^* dg` restricted to `J_L`, as a circle form
/// in the chart `phi = theta - theta0`.
pub fn transport_data(
    trace: &impl SurfaceTrace,
    channel: &Channel,
    fi: &FundamentalIntervals,
    k_max: usize,
    n_samples: usize,
) -> Result<(CircleForm, Option<Warning>)> {
    let (lo, hi) = trace.support();
    if hi > lo {
        if lo < fi.theta0 + 2.0 * PI {
            return Err(Error::Support(format!(
                "surface data reaches theta = {lo:.4}, left of the end of J_L at {:.4}",
                fi.theta0 + 2.0 * PI
            )));
        }
        if hi > fi.theta_r0 + 2.0 * PI {
            return Err(Error::Support(format!(
                "surface data reaches theta = {hi:.4}, beyond the end of J_R at {:.4}",
                fi.theta_r0 + 2.0 * PI
            )));
        }
    }
    use rayon::prelude::*;
    let samples: Vec<c64> = (0..n_samples)
        .into_par_iter()
        .map(|m| {
            let mut t = fi.theta0 + 2.0 * PI * m as f64 / n_samples as f64;
            let mut d = 1.0;
            let mut acc = c64::new(0.0, 0.0);
            for _ in 0..fi.n {
                let (nt, nd) = channel.billiard_theta(t).expect("subcritical channel");
                t = nt;
                d *= nd;
                if t > lo && t < hi {
                    acc -= trace.derivative(t) * d;
                }
            }
            acc
        })
        .collect();
    CircleForm::from_samples(&samples, k_max)
}

/// Neumann data solving `v_L - b^* v_R = bold g` with
/// `Pi^+ v_L = Pi^- v_R = 0`.
#[derive(Debug, Clone)]
pub struct OutgoingData {
    pub v_l: CircleForm,
    pub v_r: CircleForm,
    /// Inner-band `L^2` norm of `v_L - b^* v_R - bold g`.
    pub transport_residual: f64,
    /// `(|Pi^+ v_L|, |Pi^- v_R|)` in `L^2`.
    pub outgoing_defect: (f64, f64),
}

pub fn solve_outgoing_data(transport_g: &CircleForm, assembly: &ScatteringAssembly) -> OutgoingData {
    let g_in = transport_g.project(Sign::Plus).scale(c64::new(-1.0, 0.0));
    let hom = assembly.solve_homogeneous_data(&g_in);
    let v_l = hom.v_l.add(transport_g);
    let v_r = hom.v_r;
    let band = assembly.k_max / 4;
    let residual = v_l.sub(&assembly.b.apply(&v_r)).sub(transport_g).band_limited(band);
    OutgoingData {
        outgoing_defect: (
            v_l.project(Sign::Plus).l2_coeff_norm(),
            v_r.project(Sign::Minus).l2_coeff_norm(),
        ),
        transport_residual: residual.l2_coeff_norm(),
        v_l,
        v_r,
    }
}

/// The surface potential `omega`, defined on the whole surface by the
/// cocycle relation and tabulated on `J_L`.
#[derive(Debug, Clone)]
pub struct Omega {
    pub channel: Channel,
    pub fi: FundamentalIntervals,
    pub v_l: CircleForm,
    pub window: (f64, f64),
    /// `|mean of v_L|` lost when the data was projected to a circle form.
    pub mean_defect: f64,
    base: HermiteTable,
}

impl Omega {
    /// `omega = int v_L` on `J_L` (zero at `theta0`), extended tile by tile.
    pub fn build(
        v_l: &CircleForm,
        mean_defect: f64,
        trace: &impl SurfaceTrace,
        channel: &Channel,
        fi: FundamentalIntervals,
        window: (f64, f64),
        nodes_per_tile: usize,
    ) -> Result<Self> {
        let prim = v_l.antiderivative_samples(nodes_per_tile);
        let dv = v_l.to_samples(nodes_per_tile);
        let mut values = prim;
        values.push(values[0]);
        let mut derivs = dv;
        derivs.push(derivs[0]);
        let base = HermiteTable::new(0.0, 2.0 * PI / nodes_per_tile as f64, values, derivs);
        let omega = Omega {
            channel: channel.clone(),
            fi,
            v_l: v_l.clone(),
            window,
            mean_defect,
            base,
        };
        omega.check_continuity(trace)?;
        Ok(omega)
    }

    fn base_eval(&self, phi: f64, exact: bool) -> (c64, c64) {
        let phi = phi.rem_euclid(2.0 * PI);
        if exact {
            (self.v_l.antiderivative(phi), self.v_l.eval(phi))
        } else {
            self.base.eval(phi).expect("phi reduced to the base period")
        }
    }

    /// `(omega, omega')` at `theta`.
    pub fn eval(&self, trace: &impl SurfaceTrace, theta: f64) -> Result<(c64, c64)> {
        self.eval_impl(trace, theta, false)
    }

    /// As [`Omega::eval`] but sums the Fourier series of `omega` on `J_L`
    /// instead of interpolating it.
    pub fn eval_exact(&self, trace: &impl SurfaceTrace, theta: f64) -> Result<(c64, c64)> {
        self.eval_impl(trace, theta, true)
    }

    fn eval_impl(&self, trace: &impl SurfaceTrace, theta: f64, exact: bool) -> Result<(c64, c64)> {
        if theta < self.window.0 || theta > self.window.1 {
            return Err(Error::Window(format!(
                "theta = {theta:.4} outside the omega window [{:.4}, {:.4}]",
                self.window.0, self.window.1
            )));
        }
        let start = self.fi.theta0;
        let end = start + 2.0 * PI;
        let mut t = theta;
        let mut d = 1.0;
        let mut sum = c64::new(0.0, 0.0);
        let mut dsum = c64::new(0.0, 0.0);
        let (lo, hi) = trace.support();
        let live = |t: f64| hi > lo && t > lo && t < hi;
        while t >= end {
            // omega(t) = omega(b^-1 t) + g(t)
            if live(t) {
                sum += trace.value(t);
                dsum += trace.derivative(t) * d;
            }
            let (nt, nd) = self.channel.billiard_inverse_theta(t)?;
            t = nt;
            d *= nd;
        }
        while t < start {
            // omega(t) = omega(b t) - g(b t)
            let (nt, nd) = self.channel.billiard_theta(t)?;
            t = nt;
            d *= nd;
            if live(t) {
                sum -= trace.value(t);
                dsum -= trace.derivative(t) * d;
            }
        }
        let (w, dw) = self.base_eval(t - start, exact);
        Ok((w + sum, dw * d + dsum))
    }

    /// Jumps of `omega` across the tile boundaries `b^k(theta0)` inside the
    /// window, probing the reduction from both sides.
    pub fn continuity_jumps(&self, trace: &impl SurfaceTrace) -> Result<Vec<(f64, f64)>> {
        let mut boundaries = Vec::new();
        let mut t = self.fi.theta0;
        while t < self.window.1 {
            t = self.channel.billiard_theta(t)?.0;
            if t < self.window.1 {
                boundaries.push(t);
            }
        }
        let mut t = self.fi.theta0;
        while t > self.window.0 {
            boundaries.push(t);
            t = self.channel.billiard_inverse_theta(t)?.0;
        }
        let delta = 1e-7;
        let mut out = Vec::with_capacity(boundaries.len());
        for b in boundaries {
            if b - delta < self.window.0 || b + delta > self.window.1 {
                continue;
            }
            let (wl, dl) = self.eval_exact(trace, b - delta)?;
            let (wr, dr) = self.eval_exact(trace, b + delta)?;
            let jump = (wr - wl - (dl + dr) * delta).norm() + 2.0 * PI * self.mean_defect;
            out.push((b, jump));
        }
        Ok(out)
    }

    fn check_continuity(&self, trace: &impl SurfaceTrace) -> Result<()> {
        for (theta, jump) in self.continuity_jumps(trace)? {
            if jump > CONTINUITY_TOL {
                return Err(Error::Continuity { jump, theta });
            }
        }
        Ok(())
    }
}

/// Options for [`OutgoingSolution::solve`].
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Nodes per `2 pi` for the tables of `g` and `omega`.
    pub nodes_per_period: usize,
    /// Samples of `bold g` on `J_L`.
    pub transport_samples: usize,
    /// Half-width in `x1` of the region where the field will be evaluated.
    pub half_width: f64,
}

impl SolveOptions {
    pub fn for_k(k_max: usize, half_width: f64) -> Self {
        SolveOptions {
            nodes_per_period: 16 * k_max,
            transport_samples: 16 * k_max,
            half_width,
        }
    }
}

/// The outgoing solution of `P(lambda) u = f`, `u = 0` on the boundary.
#[derive(Debug, Clone)]
pub struct OutgoingSolution {
    pub channel: Channel,
    pub fi: FundamentalIntervals,
    pub source: SourceTerm,
    pub trace: TraceG,
    pub transport_g: CircleForm,
    pub data: OutgoingData,
    pub omega: Omega,
    pub warnings: Vec<Warning>,
}

impl OutgoingSolution {
    pub fn solve(
        channel: &Channel,
        fi: FundamentalIntervals,
        assembly: &ScatteringAssembly,
        source: &SourceTerm,
        opts: SolveOptions,
    ) -> Result<Self> {
        let trace = TraceG::new(channel, source, opts.nodes_per_period)?;
        let mut warnings = trace.warnings.clone();
        let (transport_g, w) = transport_data(&trace, channel, &fi, assembly.k_max, opts.transport_samples)?;
        warnings.extend(w);
        let scale = trace
            .table
            .as_ref()
            .map(|t| t.derivs.iter().map(|z| z.norm()).fold(0.0, f64::max))
            .unwrap_or(0.0);
        if transport_g.mean_defect > 1e-8 * scale.max(1.0) {
            log::warn!("transport data has mean {:.3e}; expected zero", transport_g.mean_defect);
        }
        let data = solve_outgoing_data(&transport_g, assembly);
        let depth = channel.topo.max_depth();
        let c = channel.c();
        let reach = c * opts.half_width + depth + 1.0;
        let window = (
            (fi.theta0 - 2.0 * PI).min(-reach),
            (fi.theta_r0 + 4.0 * PI).max(reach),
        );
        let omega = Omega::build(&data.v_l, transport_g.mean_defect, &trace, channel, fi, window, opts.nodes_per_period)?;
        Ok(OutgoingSolution {
            channel: channel.clone(),
            fi,
            source: source.clone(),
            trace,
            transport_g,
            data,
            omega,
            warnings,
        })
    }

    fn field_impl(&self, x1: f64, x2: f64, exact: bool) -> Result<c64> {
        let c = self.channel.c();
        let tp = c * x1 + x2;
        let tm = c * x1 - x2;
        let eval = |t: f64| {
            if exact {
                self.omega.eval_exact(&self.trace, t)
            } else {
                self.omega.eval(&self.trace, t)
            }
        };
        let (wp, _) = eval(tp)?;
        let (wm, _) = eval(tm)?;
        let u0 = self.source.u0(&self.channel, x1, x2);
        Ok(u0 - wp - self.trace.value(tm) + wm)
    }

    /// `u(x1, x2)` using the tabulated `omega`.
    pub fn field(&self, x1: f64, x2: f64) -> Result<c64> {
        self.field_impl(x1, x2, false)
    }

    /// `u(x1, x2)` with `omega` on `J_L` summed from its Fourier series.
    pub fn field_exact(&self, x1: f64, x2: f64) -> Result<c64> {
        self.field_impl(x1, x2, true)
    }

    /// Samples the field on a grid (rows in parallel).
    pub fn reconstruct(&self, grid: &Grid) -> Result<WaveField> {
        let c = self.channel.c();
        let depth = self.channel.topo.max_depth();
        for t in [c * grid.x1_min - depth, c * grid.x1_max + depth] {
            if t < self.omega.window.0 || t > self.omega.window.1 {
                return Err(Error::Window(format!(
                    "grid reaches theta = {t:.4}, outside the omega window"
                )));
            }
        }
        let field = WaveField::from_fn(grid.clone(), self.channel.lambda(), self.channel.topo.hash(), |a, b| {
            self.field(a, b).unwrap_or(c64::new(f64::NAN, f64::NAN))
        });
        if field.values.iter().any(|z| z.re.is_nan()) {
            return Err(Error::Window("field evaluation failed on the grid".into()));
        }
        Ok(field)
    }

    /// `1/2 d2 u` on the surface at `theta` from `omega` and `U0`
    /// (the analytic route).
    pub fn neumann_analytic(&self, theta: f64) -> Result<c64> {
        let c = self.channel.c();
        let (_, dw) = self.omega.eval_exact(&self.trace, theta)?;
        let (_, d2u0) = self.source.u0_gradient(&self.channel, theta / c, 0.0);
        // d2 [ -omega(theta+) - g(theta-) + omega(theta-) ] = -2 omega' + g'
        Ok(0.5 * (d2u0 - dw * 2.0 + self.trace.derivative(theta)))
    }

    /// Surface Neumann data `1/2 d2 u dtheta` on the circle chart starting
    /// at `start`, from one-sided differences of the field evaluator.
    pub fn neumann_form(&self, start: f64, k_max: usize, n_samples: usize, step: f64) -> Result<CircleForm> {
        let c = self.channel.c();
        let mut samples = Vec::with_capacity(n_samples);
        for m in 0..n_samples {
            let theta = start + 2.0 * PI * m as f64 / n_samples as f64;
            let x1 = theta / c;
            let d = one_sided_surface_derivative(|x2| self.field_exact(x1, x2), step)?;
            samples.push(0.5 * d);
        }
        Ok(CircleForm::from_samples(&samples, k_max)?.0)
    }
}

/// Sixth-order one-sided derivative in `x2` at the surface, sampling
/// `x2 = 0, -h, ..., -6h`.
pub fn one_sided_surface_derivative(f: impl Fn(f64) -> Result<c64>, h: f64) -> Result<c64> {
    const W: [f64; 7] = [49.0 / 20.0, -6.0, 15.0 / 2.0, -20.0 / 3.0, 15.0 / 4.0, -6.0 / 5.0, 1.0 / 6.0];
    let mut acc = c64::new(0.0, 0.0);
    for (k, w) in W.iter().enumerate() {
        acc += f(-(k as f64) * h)? * *w;
    }
    Ok(acc / h)
}

/// Surface Neumann data `1/2 d2 u` on every grid column from a
/// second-order one-sided stencil.
pub fn neumann_from_grid(field: &WaveField) -> Result<Vec<(f64, c64)>> {
    let g = &field.grid;
    if g.n2 < 3 {
        return Err(Error::Stencil(format!("need at least 3 rows in sigma, grid has {}", g.n2)));
    }
    let h = g.h_sigma();
    Ok((0..g.n1)
        .map(|i| {
            let d_sigma = (field.at(i, 0) * -3.0 + field.at(i, 1) * 4.0 - field.at(i, 2)) / (2.0 * h);
            (g.x1(i), 0.5 * d_sigma / g.depth[i])
        })
        .collect())
}

/// Neumann data on `[x_a, x_b]` interpolated from the grid columns; fails
/// near the grid edges where the stencil is unavailable.
pub fn neumann_on_interval(field: &WaveField, x_a: f64, x_b: f64) -> Result<Vec<(f64, c64)>> {
    let g = &field.grid;
    if x_a < g.x1(1) || x_b > g.x1(g.n1 - 2) {
        return Err(Error::Stencil(format!(
            "interval [{x_a}, {x_b}] reaches the grid edge [{}, {}]",
            g.x1_min, g.x1_max
        )));
    }
    Ok(neumann_from_grid(field)?
        .into_iter()
        .filter(|(x, _)| *x >= x_a && *x <= x_b)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topography::Topography;
    use std::f64::consts::FRAC_1_SQRT_2;

    struct Bump {
        center: f64,
        width: f64,
    }

    impl SurfaceTrace for Bump {
        fn support(&self) -> (f64, f64) {
            (self.center - self.width, self.center + self.width)
        }
        fn value(&self, t: f64) -> c64 {
            c64::new(crate::source::poly_bump((t - self.center) / self.width), 0.0)
        }
        fn derivative(&self, t: f64) -> c64 {
            let s = (t - self.center) / self.width;
            if s.abs() >= 1.0 {
                return c64::new(0.0, 0.0);
            }
            c64::new(-16.0 * s * (1.0 - s * s).powi(7) / self.width, 0.0)
        }
    }

    #[test]
    fn flat_transport_superposes_translates() {
        let ch = Channel::new(Topography::flat(), FRAC_1_SQRT_2).unwrap();
        let fi = ch.fundamental_intervals().unwrap();
        let g = Bump { center: 0.3, width: 5.0 };
        let (form, _) = transport_data(&g, &ch, &fi, 128, 1024).unwrap();
        for m in 0..16 {
            let phi = 2.0 * PI * m as f64 / 16.0;
            let expect: c64 = (1..=fi.n).map(|k| -g.derivative(fi.theta0 + phi + 2.0 * PI * k as f64)).sum();
            let err = (form.eval(phi) - expect).norm();
            assert!(err < 1e-8, "{err}");
        }
        assert!(form.mean_defect < 1e-12);
    }

    #[test]
    fn transport_rejects_wide_support() {
        let ch = Channel::new(Topography::flat(), FRAC_1_SQRT_2).unwrap();
        let fi = ch.fundamental_intervals().unwrap();
        let g = Bump { center: 0.0, width: 40.0 };
        assert!(matches!(transport_data(&g, &ch, &fi, 8, 64), Err(Error::Support(_))));
    }

    #[test]
    fn flat_omega_is_periodic_primitive() {
        let ch = Channel::new(Topography::flat(), FRAC_1_SQRT_2).unwrap();
        let fi = ch.fundamental_intervals().unwrap();
        let sin = CircleForm::from_fn(8, |k| match k {
            1 => c64::new(0.0, -0.5),
            -1 => c64::new(0.0, 0.5),
            _ => c64::new(0.0, 0.0),
        });
        let none = Bump { center: 0.0, width: 0.0 };
        let om = Omega::build(&sin, 0.0, &none, &ch, fi, (-60.0, 60.0), 256).unwrap();
        for &t in &[-40.0, -3.0, 0.5, 17.0, 44.0] {
            let (w, dw) = om.eval_exact(&none, t).unwrap();
            let phi = t - fi.theta0;
            assert!((w.re - (1.0 - phi.cos())).abs() < 1e-12, "{t}: {w}");
            assert!((dw.re - phi.sin()).abs() < 1e-12);
        }
        assert!(matches!(om.eval(&none, 100.0), Err(Error::Window(_))));
    }
}
