//! Finite-section scattering matrix.
//!
//! Unknowns are the outgoing halves `x^- = Pi^- g_out` (on `J_L`) and
//! `x^+ = Pi^+ g_out` (on `J_R`). The transport relations `v_L = b^* v_R` and
//! `v_R = b^{-*} v_L`, projected onto the outgoing halves, read
//! `T x = C g_in` with
//!
//! ```text
//! T = | Id              -Pi^- b^* Pi^+ |     C = | Pi^- b^* Pi^-        0           |
//!     | -Pi^+ b^-* Pi^-  Id            |         | 0             Pi^+ b^-* Pi^+   |
//! ```
//!
//! and `S = T^{-1} C`. In the storage order of [`CircleForm`] the `Pi^-`
//! block comes first, so these are plain 2x2 block matrices.

use std::io::Write;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{c64, Col, Mat};

use crate::circle::{assemble_pullback, freq_of, CircleForm, Inverse, PullbackMatrix, Sign};
use crate::error::{Error, Result, Warning};
use crate::geometry::{BilliardCircleMap, Channel, FundamentalIntervals};

pub const COND_CAP: f64 = 1e8;
pub const MARGIN_WARNING: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct ScatteringAssembly {
    pub k_max: usize,
    pub b: PullbackMatrix,
    pub binv: PullbackMatrix,
    pub t: Mat<c64>,
    pub s: Mat<c64>,
    pub cond_t: f64,
    pub sigma_min_t: f64,
    pub warnings: Vec<Warning>,
    lu: PartialPivLu<c64>,
}

/// Off-diagonal coupling blocks of `T` (without the minus sign).
pub fn coupling(b: &PullbackMatrix, binv: &PullbackMatrix) -> Mat<c64> {
    let k = b.k_max;
    Mat::from_fn(2 * k, 2 * k, |i, j| match (i < k, j < k) {
        (true, false) => b.entries[(i, j)],
        (false, true) => binv.entries[(i, j)],
        _ => c64::new(0.0, 0.0),
    })
}

/// Block-diagonal pullback part `C = Pi^- b^* Pi^- + Pi^+ b^-* Pi^+`.
pub fn diagonal_part(b: &PullbackMatrix, binv: &PullbackMatrix) -> Mat<c64> {
    let k = b.k_max;
    Mat::from_fn(2 * k, 2 * k, |i, j| match (i < k, j < k) {
        (true, true) => b.entries[(i, j)],
        (false, false) => binv.entries[(i, j)],
        _ => c64::new(0.0, 0.0),
    })
}

pub fn assemble_t(b: &PullbackMatrix, binv: &PullbackMatrix) -> Mat<c64> {
    assert_eq!(b.k_max, binv.k_max, "pullbacks assembled at different K");
    let n = 2 * b.k_max;
    Mat::<c64>::identity(n, n) - coupling(b, binv)
}

fn unit_start(n: usize) -> Col<c64> {
    // deterministic start vector with energy in every mode
    let v = Col::from_fn(n, |i| c64::new(1.0 + (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()));
    let nrm = v.norm_l2();
    v * faer::Scale(c64::new(1.0 / nrm, 0.0))
}

fn power_iteration(mut apply: impl FnMut(&Col<c64>) -> Col<c64>, n: usize) -> f64 {
    let mut v = unit_start(n);
    let mut est = 0.0;
    for _ in 0..500 {
        let w = apply(&v);
        let nrm = w.norm_l2();
        if nrm == 0.0 {
            return 0.0;
        }
        let next = nrm.sqrt();
        v = w * faer::Scale(c64::new(1.0 / nrm, 0.0));
        if (next - est).abs() <= 1e-10 * next {
            return next;
        }
        est = next;
    }
    est
}

/// Largest singular value by power iteration on `A^H A`.
pub fn norm_estimate(a: &Mat<c64>) -> f64 {
    power_iteration(|v| a.adjoint() * (a * v), a.ncols())
}

impl ScatteringAssembly {
    pub fn from_pullbacks(b: PullbackMatrix, binv: PullbackMatrix, warnings: Vec<Warning>) -> Result<Self> {
        let t = assemble_t(&b, &binv);
        let lu = t.partial_piv_lu();
        let n = t.nrows();
        let inv_norm = power_iteration(
            |v| {
                let w = lu.solve(v);
                lu.solve_adjoint(&w)
            },
            n,
        );
        let sigma_min_t = 1.0 / inv_norm;
        let cond_t = norm_estimate(&t) * inv_norm;
        if !cond_t.is_finite() || cond_t > COND_CAP {
            return Err(Error::IllConditioned {
                cond: cond_t,
                cap: COND_CAP,
            });
        }
        let s = lu.solve(diagonal_part(&b, &binv));
        Ok(ScatteringAssembly {
            k_max: b.k_max,
            b,
            binv,
            t,
            s,
            cond_t,
            sigma_min_t,
            warnings,
            lu,
        })
    }

    /// Assembles `b^*`, `b^{-*}` of the multi-bounce circle map with
    /// `n_quad` trapezoid nodes and builds `S`.
    pub fn build(channel: &Channel, fi: FundamentalIntervals, k_max: usize, n_quad: usize) -> Result<Self> {
        let map = BilliardCircleMap::new(channel, fi);
        let mut warnings = Vec::new();
        if channel.params.subcritical_margin < MARGIN_WARNING {
            let w = Warning::Conditioning {
                margin: channel.params.subcritical_margin,
            };
            log::warn!("{w}");
            warnings.push(w);
        }
        let (b, w1) = assemble_pullback(&map, k_max, n_quad)?;
        let (binv, w2) = assemble_pullback(&Inverse(&map), k_max, n_quad)?;
        warnings.extend(w1);
        warnings.extend(w2);
        Self::from_pullbacks(b, binv, warnings)
    }

    /// `S = T^{-1} C`.
    pub fn scattering_matrix(&self) -> &Mat<c64> {
        &self.s
    }

    pub fn apply_s(&self, g: &CircleForm) -> CircleForm {
        CircleForm::from_col(self.k_max, &(&self.s * g.to_col()))
    }

    pub fn apply_t_inverse(&self, rhs: &Col<c64>) -> Col<c64> {
        self.lu.solve(rhs)
    }

    /// `R = S - Pi^- b^* Pi^- - Pi^+ b^-* Pi^+` with decay diagnostics.
    pub fn smoothing_remainder(&self) -> Remainder {
        let r = &self.s - diagonal_part(&self.b, &self.binv);
        let band = self.k_max / 4;
        let decay = [2, 4, 6].map(|n| (n, decay_constant(&r, self.k_max, band, n)));
        Remainder { r, decay }
    }

    /// Outgoing data for incoming `g_in`:
    /// `v_L = Pi^+ g_in + Pi^- g_out`, `v_R = Pi^- g_in + Pi^+ g_out`.
    pub fn solve_homogeneous_data(&self, g_in: &CircleForm) -> HomogeneousData {
        let g_out = self.apply_s(g_in);
        let v_l = g_in.project(Sign::Plus).add(&g_out.project(Sign::Minus));
        let v_r = g_in.project(Sign::Minus).add(&g_out.project(Sign::Plus));
        HomogeneousData { g_out, v_l, v_r }
    }

    /// `Pi^- b^* Pi^+` and `Pi^+ b^-* Pi^-` stacked, for diagnostics.
    pub fn offdiag_norm(&self) -> f64 {
        norm_estimate(&coupling(&self.b, &self.binv))
    }

    /// Largest relative change of the `H^s` norm under `S` over the given
    /// forms.
    pub fn unitarity_defect(&self, forms: &[CircleForm], s: f64) -> f64 {
        forms
            .iter()
            .map(|g| {
                let n0 = g.sobolev_norm(s);
                let n1 = self.apply_s(g).sobolev_norm(s);
                (n1 - n0).abs() / n0
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct HomogeneousData {
    pub g_out: CircleForm,
    pub v_l: CircleForm,
    pub v_r: CircleForm,
}

#[derive(Debug, Clone)]
pub struct Remainder {
    pub r: Mat<c64>,
    /// `(N, C_N)` with `|R_jk| <= C_N (1 + |j| + |k|)^{-N}` on the inner band.
    pub decay: [(i32, f64); 3],
}

impl Remainder {
    pub fn constant(&self, n: i32) -> f64 {
        self.decay.iter().find(|(m, _)| *m == n).map(|(_, c)| *c).unwrap_or(f64::NAN)
    }
}

/// Smallest `C` with `|R_jk| <= C (1+|j|+|k|)^{-N}` for `|j|, |k| <= band`.
pub fn decay_constant(r: &Mat<c64>, k_max: usize, band: usize, n: i32) -> f64 {
    let mut c = 0.0f64;
    for col in 0..r.ncols() {
        let k = freq_of(col, k_max).abs();
        if k as usize > band {
            continue;
        }
        for row in 0..r.nrows() {
            let j = freq_of(row, k_max).abs();
            if j as usize > band {
                continue;
            }
            let w = (1.0 + j as f64 + k as f64).powi(n);
            c = c.max(r[(row, col)].norm() * w);
        }
    }
    c
}

/// Flux balance `|Pi^+ v_L|^2 + |Pi^- v_R|^2 - |Pi^+ v_R|^2 - |Pi^- v_L|^2` in
/// `H^s`, relative to the total.
pub fn flux_balance_defect(v_l: &CircleForm, v_r: &CircleForm, s: f64) -> f64 {
    let sq = |v: &CircleForm, sign: Sign| v.project(sign).sobolev_norm(s).powi(2);
    let incoming = sq(v_l, Sign::Plus) + sq(v_r, Sign::Minus);
    let outgoing = sq(v_r, Sign::Plus) + sq(v_l, Sign::Minus);
    let total = incoming + outgoing;
    if total == 0.0 {
        0.0
    } else {
        (incoming - outgoing).abs() / total
    }
}

/// CSV with columns `j,k,re,im`.
pub fn write_matrix_csv(m: &Mat<c64>, k_max: usize, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "j,k,re,im")?;
    for row in 0..m.nrows() {
        for col in 0..m.ncols() {
            let z = m[(row, col)];
            writeln!(
                w,
                "{},{},{:.17e},{:.17e}",
                freq_of(row, k_max),
                freq_of(col, k_max),
                z.re,
                z.im
            )?;
        }
    }
    Ok(())
}
