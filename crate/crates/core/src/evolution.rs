//! Forced Poincare problem `dt^2 Lap u + d2^2 u = Re(e^{i lambda t} f)`
//! with zero initial data, advanced by leapfrog in `w = Lap u`, and
//! windowed demodulation of the standing-wave profile.
//!
//! Space is discretized by bilinear elements on the boundary-fitted grid:
//! `K` is the Dirichlet stiffness, `K2` its `d2` part and `M` the lumped
//! mass, so `Lap ~ -M^-1 K` and `d2^2 ~ -M^-1 K2`.

use std::f64::consts::PI;

use faer::c64;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{plateau_cutoff, Grid, WaveField};
use crate::quadrature::gauss_legendre;
use crate::source::SourceTerm;
use crate::topography::Topography;

/// Largest horizontal group speed of `omega = |k2| / |k|`.
pub const GROUP_SPEED: f64 = 0.384_900_179_459_750_5;
pub const MAX_DT: f64 = 0.5;
pub const MIN_SNAPSHOTS_PER_PERIOD: f64 = 16.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub lambda: f64,
    pub t_final: f64,
    pub dt: f64,
    /// Half-width of the computational box.
    pub l_evo: f64,
    /// `chi = 1` on `|x1| <= l_report - chi_ramp`, `0` beyond `l_report`.
    pub l_report: f64,
    pub chi_ramp: f64,
    /// Intervals per unit length in `x1`.
    pub cells_per_unit: f64,
    /// Intervals in `sigma`.
    pub n2: usize,
    pub snapshot_stride: usize,
    /// Snapshots are kept for `t >= record_from`.
    pub record_from: f64,
    /// Forcing is switched off after this time.
    pub forcing_off: Option<f64>,
}

impl EvolutionConfig {
    /// Box half-width required by the group-speed bound.
    pub fn required_half_width(l_report: f64, t_final: f64) -> f64 {
        l_report + GROUP_SPEED * t_final + 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!("lambda = {} outside (0, 1)", self.lambda)));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::Config(format!("dt = {} outside (0, {MAX_DT}]", self.dt)));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config("t_final must be positive".into()));
        }
        let need = Self::required_half_width(self.l_report, self.t_final);
        if self.l_evo < need - 1e-12 {
            return Err(Error::Config(format!(
                "l_evo = {} below the group-speed bound {need:.3}",
                self.l_evo
            )));
        }
        if self.chi_ramp <= 0.0 || self.chi_ramp >= self.l_report {
            return Err(Error::Config("chi_ramp must lie in (0, l_report)".into()));
        }
        if self.snapshot_stride == 0 || self.n2 < 2 || self.cells_per_unit <= 0.0 {
            return Err(Error::Config("degenerate grid or stride".into()));
        }
        Ok(())
    }

    pub fn grid(&self, topo: &Topography) -> Grid {
        let n1 = (2.0 * self.l_evo * self.cells_per_unit).round() as usize;
        Grid::symmetric(topo, self.l_evo, n1, self.n2)
    }

    pub fn cutoff(&self) -> impl Fn(f64) -> f64 + Copy + Sync {
        plateau_cutoff(self.l_report - self.chi_ramp, self.l_report)
    }
}

/// Factorized Dirichlet Laplacian on the interior nodes of a grid.
pub struct DirichletLaplacian {
    pub grid: Grid,
    pub stiffness: SparseColMat<usize, f64>,
    pub stiffness2: SparseColMat<usize, f64>,
    pub mass: Vec<f64>,
    llt: Llt<usize, f64>,
}

impl DirichletLaplacian {
    pub fn factorize(topo: &Topography, grid: &Grid) -> Result<Self> {
        let (n1, n2) = (grid.n1, grid.n2);
        let m1 = n1 - 2;
        let m2 = n2 - 2;
        let dim = m1 * m2;
        let h = grid.h1();
        let k = grid.h_sigma();
        let (gx, gw) = gauss_legendre(2);
        let unknown = |i: usize, j: usize| -> Option<usize> {
            (i > 0 && i < n1 - 1 && j > 0 && j < n2 - 1).then(|| (i - 1) * m2 + (j - 1))
        };
        let mut tk = Vec::with_capacity(dim * 9);
        let mut tk2 = Vec::with_capacity(dim * 9);
        let mut mass = vec![0.0; dim];
        for i in 0..n1 - 1 {
            let xi0 = grid.x1(i);
            for j in 0..n2 - 1 {
                let s0 = grid.sigma(j);
                let mut ke = [[0.0; 4]; 4];
                let mut k2e = [[0.0; 4]; 4];
                let mut me = [0.0; 4];
                for (qa, wa) in gx.iter().zip(&gw) {
                    let p = 0.5 * (qa + 1.0);
                    let xi = xi0 + h * p;
                    let (g, dg, _) = topo.eval(xi);
                    for (qb, wb) in gx.iter().zip(&gw) {
                        let q = 0.5 * (qb + 1.0);
                        let s = s0 + k * q;
                        let a = -s * dg / g;
                        let wt = wa * wb * 0.25 * h * k * g.abs();
                        // corners (0,0), (1,0), (0,1), (1,1) in (xi, sigma)
                        let n = [(1.0 - p) * (1.0 - q), p * (1.0 - q), (1.0 - p) * q, p * q];
                        let dxi = [-(1.0 - q) / h, (1.0 - q) / h, -q / h, q / h];
                        let ds = [-(1.0 - p) / k, -p / k, (1.0 - p) / k, p / k];
                        let d1: Vec<f64> = (0..4).map(|c| dxi[c] + a * ds[c]).collect();
                        let d2: Vec<f64> = (0..4).map(|c| ds[c] / g).collect();
                        for r in 0..4 {
                            me[r] += n[r] * wt;
                            for c in 0..4 {
                                ke[r][c] += (d1[r] * d1[c] + d2[r] * d2[c]) * wt;
                                k2e[r][c] += d2[r] * d2[c] * wt;
                            }
                        }
                    }
                }
                let nodes = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)];
                for r in 0..4 {
                    let Some(ur) = unknown(nodes[r].0, nodes[r].1) else { continue };
                    mass[ur] += me[r];
                    for c in 0..4 {
                        let Some(uc) = unknown(nodes[c].0, nodes[c].1) else { continue };
                        tk.push(Triplet::new(ur, uc, ke[r][c]));
                        tk2.push(Triplet::new(ur, uc, k2e[r][c]));
                    }
                }
            }
        }
        let build = |t: &[Triplet<usize, usize, f64>]| {
            SparseColMat::try_new_from_triplets(dim, dim, t).map_err(|e| Error::SingularSystem(format!("{e:?}")))
        };
        let stiffness = build(&tk)?;
        let stiffness2 = build(&tk2)?;
        let llt = stiffness
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::SingularSystem(format!("Dirichlet Laplacian factorization failed: {e:?}")))?;
        Ok(DirichletLaplacian {
            grid: grid.clone(),
            stiffness,
            stiffness2,
            mass,
            llt,
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    /// `Lap^-1 w = -K^-1 M w`.
    pub fn inverse(&self, w: &Col<f64>) -> Col<f64> {
        let mw = Col::from_fn(w.nrows(), |r| -self.mass[r] * w[r]);
        self.llt.solve(&mw)
    }

    /// `Lap u = -M^-1 K u`.
    pub fn apply(&self, u: &Col<f64>) -> Col<f64> {
        let ku = &self.stiffness * u;
        Col::from_fn(u.nrows(), |r| -ku[r] / self.mass[r])
    }

    /// `d2^2 u = -M^-1 K2 u`.
    pub fn d22(&self, u: &Col<f64>) -> Col<f64> {
        let ku = &self.stiffness2 * u;
        Col::from_fn(u.nrows(), |r| -ku[r] / self.mass[r])
    }

    /// `<a, b>_M`.
    pub fn inner(&self, a: &Col<f64>, b: &Col<f64>) -> f64 {
        (0..a.nrows()).map(|r| self.mass[r] * a[r] * b[r]).sum()
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Col<f64> {
        let m2 = self.grid.n2 - 2;
        Col::from_fn(self.dim(), |r| {
            let (x1, x2) = self.grid.point(r / m2 + 1, r % m2 + 1);
            f(x1, x2)
        })
    }

    pub fn node_of(&self, r: usize) -> (usize, usize) {
        let m2 = self.grid.n2 - 2;
        (r / m2 + 1, r % m2 + 1)
    }

    /// Leapfrog energy `|du|_K^2 / dt^2 + u_next^T K2 u_prev`, conserved
    /// exactly by the unforced scheme.
    pub fn leapfrog_energy(&self, u_prev: &Col<f64>, u_next: &Col<f64>, dt: f64) -> f64 {
        let du = u_next - u_prev;
        let kdu = &self.stiffness * &du;
        let k2u = &self.stiffness2 * u_prev;
        let a: f64 = (0..du.nrows()).map(|r| du[r] * kdu[r]).sum::<f64>() / (dt * dt);
        let b: f64 = (0..du.nrows()).map(|r| u_next[r] * k2u[r]).sum();
        a + b
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionTrace {
    pub lambda: f64,
    pub dt: f64,
    /// Columns of the box grid that form the report grid.
    pub report_grid: Grid,
    pub snapshot_times: Vec<f64>,
    /// `chi u(t)` on the report grid.
    pub snapshots: Vec<Vec<f64>>,
    /// `(t, ||chi u(t)||_{H^1})` at every step.
    pub h1_series: Vec<(f64, f64)>,
    /// Leapfrog energy after the forcing is switched off.
    pub energy_series: Vec<(f64, f64)>,
    pub topo_hash: String,
}

fn report_columns(grid: &Grid, l_report: f64) -> (usize, usize) {
    let lo = (0..grid.n1).find(|&i| grid.x1(i) >= -l_report - 1e-12).unwrap_or(0);
    let hi = (0..grid.n1).rev().find(|&i| grid.x1(i) <= l_report + 1e-12).unwrap_or(grid.n1 - 1);
    (lo, hi)
}

pub fn evolve(config: &EvolutionConfig, topo: &Topography, source: &SourceTerm) -> Result<EvolutionTrace> {
    config.validate()?;
    let grid = config.grid(topo);
    let lap = DirichletLaplacian::factorize(topo, &grid)?;
    evolve_with(config, topo, source, &lap)
}

pub fn evolve_with(config: &EvolutionConfig, topo: &Topography, source: &SourceTerm, lap: &DirichletLaplacian) -> Result<EvolutionTrace> {
    let grid = &lap.grid;
    let (lo, hi) = report_columns(grid, config.l_report);
    let report_grid = Grid::new(topo, grid.x1(lo), grid.x1(hi), hi - lo + 1, grid.n2);
    let chi = config.cutoff();
    let f_re = lap.sample(|a, b| source.eval(a, b).re);
    let f_im = lap.sample(|a, b| source.eval(a, b).im);
    let f_norm = lap.inner(&f_re, &f_re).sqrt() + lap.inner(&f_im, &f_im).sqrt();
    let lambda = config.lambda;
    let dt = config.dt;
    let steps = (config.t_final / dt).round() as usize;
    let forcing = |t: f64| -> Col<f64> {
        if config.forcing_off.is_some_and(|t0| t > t0) {
            return Col::zeros(f_re.nrows());
        }
        let (c, s) = ((lambda * t).cos(), (lambda * t).sin());
        Col::from_fn(f_re.nrows(), |r| c * f_re[r] - s * f_im[r])
    };
    let hash = topo.hash();
    let mut trace = EvolutionTrace {
        lambda,
        dt,
        report_grid: report_grid.clone(),
        snapshot_times: vec![],
        snapshots: vec![],
        h1_series: vec![],
        energy_series: vec![],
        topo_hash: hash.clone(),
    };
    let m2 = grid.n2 - 2;
    let record = |trace: &mut EvolutionTrace, n: usize, u: &Col<f64>| {
        let t = n as f64 * dt;
        let mut field = WaveField::zeros(report_grid.clone(), lambda, hash.clone());
        for i in lo..=hi {
            let w = chi(grid.x1(i));
            for j in 1..grid.n2 - 1 {
                let r = (i - 1) * m2 + (j - 1);
                field.values[report_grid.index(i - lo, j)] = c64::new(w * u[r], 0.0);
            }
        }
        trace.h1_series.push((t, field.h1_norm()));
        if n % config.snapshot_stride == 0 && t >= config.record_from - 1e-12 {
            trace.snapshot_times.push(t);
            trace.snapshots.push(field.values.iter().map(|z| z.re).collect());
        }
    };
    let dim = lap.dim();
    let mut w_prev: Col<f64> = Col::zeros(dim);
    let mut u_prev: Col<f64> = Col::zeros(dim);
    record(&mut trace, 0, &u_prev);
    // Taylor start from zero data: w(dt) = dt^2 f / 2
    let f0 = forcing(0.0);
    let mut w: Col<f64> = Col::from_fn(dim, |r| 0.5 * dt * dt * f0[r]);
    let mut u = lap.inverse(&w);
    record(&mut trace, 1, &u);
    for n in 1..steps {
        let t = n as f64 * dt;
        let acc = lap.d22(&u);
        let fn_ = forcing(t);
        let w_next = Col::from_fn(dim, |r| 2.0 * w[r] - w_prev[r] + dt * dt * (-acc[r] + fn_[r]));
        let u_next = lap.inverse(&w_next);
        if let Some(t0) = config.forcing_off {
            if t > t0 {
                trace.energy_series.push((t + dt, lap.leapfrog_energy(&u, &u_next, dt)));
            }
        }
        w_prev = w;
        w = w_next;
        u_prev = u;
        u = u_next;
        let tn = (n + 1) as f64 * dt;
        let w_norm = lap.inner(&w, &w).sqrt();
        let bound = 10.0 * (f_norm * (0.5 * tn * tn + 1.0));
        if !w_norm.is_finite() || w_norm > bound {
            return Err(Error::Stability(format!(
                "|w| = {w_norm:.3e} exceeds the forcing bound {bound:.3e} at t = {tn}"
            )));
        }
        record(&mut trace, n + 1, &u);
    }
    let _ = u_prev;
    Ok(trace)
}

/// `(2 / |W|) sum e^{-i lambda t} chi u(t) dt_snap` over snapshots in
/// `window`.
pub fn standing_wave_extract(trace: &EvolutionTrace, window: (f64, f64)) -> Result<WaveField> {
    let (t0, t1) = window;
    if t1 <= t0 {
        return Err(Error::Window("empty demodulation window".into()));
    }
    let idx: Vec<usize> = (0..trace.snapshot_times.len())
        .filter(|&k| trace.snapshot_times[k] >= t0 - 1e-9 && trace.snapshot_times[k] < t1 - 1e-9)
        .collect();
    if idx.len() < 2 {
        return Err(Error::Window(format!("fewer than two snapshots in [{t0}, {t1})")));
    }
    let dt_snap = trace.snapshot_times[idx[1]] - trace.snapshot_times[idx[0]];
    let period = 2.0 * PI / trace.lambda;
    if period / dt_snap < MIN_SNAPSHOTS_PER_PERIOD {
        return Err(Error::Window(format!(
            "{:.1} snapshots per forcing period, need {MIN_SNAPSHOTS_PER_PERIOD}",
            period / dt_snap
        )));
    }
    let covered = idx.len() as f64 * dt_snap;
    if covered < (t1 - t0) * (1.0 - 1e-9) {
        return Err(Error::Window(format!("snapshots cover {covered} of the window length {}", t1 - t0)));
    }
    let mut out = WaveField::zeros(trace.report_grid.clone(), trace.lambda, trace.topo_hash.clone());
    let scale = 2.0 / (t1 - t0) * dt_snap;
    for &k in &idx {
        let ph = c64::cis(-trace.lambda * trace.snapshot_times[k]) * scale;
        for (o, &v) in out.values.iter_mut().zip(&trace.snapshots[k]) {
            *o += ph * v;
        }
    }
    Ok(out)
}

/// Least-squares slope of `series` restricted to `window`.
pub fn trend_slope(series: &[(f64, f64)], window: (f64, f64)) -> f64 {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= window.0 && *t <= window.1).collect();
    let n = pts.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    sxy / sxx
}
