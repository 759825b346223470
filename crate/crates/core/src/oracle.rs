//! Direct solve of `P(lambda - i eps) u = f`, `u = 0` on the boundary, on a
//! boundary-fitted grid with a modal radiation closure at `x1 = +-L`.
//!
//! In `(xi, sigma) = (x1, x2 / G(x1))` with `a = -sigma G'/G`:
//!
//! ```text
//! d1^2 = U_xixi + 2a U_xisigma + a^2 U_sigmasigma + (a_xi + a a_sigma) U_sigma
//! d2^2 = U_sigmasigma / G^2
//! ```

use std::f64::consts::PI;

use faer::c64;
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::geometry::Channel;
use crate::grid::{Grid, WaveField};
use crate::source::SourceTerm;

pub const MIN_EPSILON: f64 = 0.01;
pub const REFINEMENT_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct ResolventProblem {
    pub channel: Channel,
    pub epsilon: f64,
    pub half_width: f64,
    /// Intervals in `x1` and `sigma`.
    pub n1: usize,
    pub n2: usize,
    pub source: SourceTerm,
}

impl ResolventProblem {
    pub fn new(channel: &Channel, epsilon: f64, half_width: f64, n1: usize, n2: usize, source: &SourceTerm) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
        }
        if epsilon < MIN_EPSILON {
            return Err(Error::Domain(format!("epsilon = {epsilon} is below the resolvable floor {MIN_EPSILON}")));
        }
        let r0 = channel.params.r0;
        if half_width <= r0 + 2.0 {
            return Err(Error::Domain(format!("half-width {half_width} must exceed R0 + 2 = {}", r0 + 2.0)));
        }
        let (a, b) = source.x1_support();
        if !source.is_zero() && (a <= -(half_width - 1.0) || b >= half_width - 1.0) {
            return Err(Error::Support(format!("source support [{a}, {b}] reaches within 1 of the faces")));
        }
        if n1 < 4 || n2 < 3 {
            return Err(Error::Domain("grid too small".into()));
        }
        Ok(ResolventProblem {
            channel: channel.clone(),
            epsilon,
            half_width,
            n1,
            n2,
            source: source.clone(),
        })
    }

    pub fn complex_frequency(&self) -> c64 {
        c64::new(self.channel.lambda(), -self.epsilon)
    }

    /// Root of `c^2 = (1 - Lambda^2) / Lambda^2` with positive imaginary part.
    pub fn c_eps(&self) -> c64 {
        let l2 = self.complex_frequency().powi(2);
        let c = ((1.0 - l2) / l2).sqrt();
        if c.im < 0.0 {
            -c
        } else {
            c
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::symmetric(&self.channel.topo, self.half_width, self.n1, self.n2)
    }

    /// Same problem with both grid spacings scaled by `1/factor`.
    pub fn refined(&self, factor: usize) -> Self {
        ResolventProblem {
            n1: self.n1 * factor,
            n2: self.n2 * factor,
            ..self.clone()
        }
    }
}

/// Face multipliers `z_m`, `|z_m| < 1`, of the discrete flat-end modes
/// `sin(pi m j / N) z^i`.
pub fn face_multipliers(c_eps: c64, h1: f64, n_sigma_intervals: usize) -> Vec<c64> {
    let n = n_sigma_intervals as f64;
    let k = 1.0 / n;
    (1..n_sigma_intervals)
        .map(|m| {
            let mu = 4.0 / (k * k) * (PI * m as f64 / (2.0 * n)).sin().powi(2);
            let kappa2 = mu / (PI * PI);
            let t = 2.0 - h1 * h1 * c_eps * c_eps * kappa2;
            // z + 1/z = t
            let disc = (t * t - 4.0).sqrt();
            let z1 = (t + disc) / 2.0;
            let z2 = (t - disc) / 2.0;
            if z1.norm() < z2.norm() {
                z1
            } else {
                z2
            }
        })
        .collect()
}

/// Assembled discrete operator on the interior `sigma` nodes.
pub struct ResolventOperator {
    pub grid: Grid,
    pub matrix: SparseColMat<usize, c64>,
    interior: usize,
}

impl ResolventOperator {
    pub fn assemble(problem: &ResolventProblem) -> Result<Self> {
        let grid = problem.grid();
        let (n1, n2) = (grid.n1, grid.n2);
        let m = n2 - 2;
        let h = grid.h1();
        let k = grid.h_sigma();
        let lam = problem.complex_frequency();
        let a_coef = -lam * lam;
        let b_coef = 1.0 - lam * lam;
        let idx = |i: usize, j: usize| i * m + (j - 1);
        let mut trip: Vec<Triplet<usize, usize, c64>> = Vec::with_capacity(n1 * m * 9 + 2 * m * m);
        let flat_face = |i: usize| {
            let g = grid.depth[i];
            (g + PI).abs() < 1e-12 && grid.slope[i].abs() < 1e-12
        };
        if !flat_face(0) || !flat_face(n1 - 1) {
            return Err(Error::Domain("the radiation faces must lie in the flat region".into()));
        }
        for i in 0..n1 {
            let g = grid.depth[i];
            let dg = grid.slope[i];
            let ddg = grid.curvature[i];
            for j in 1..n2 - 1 {
                let s = grid.sigma(j);
                let a = -s * dg / g;
                let a_xi = -s * (ddg * g - dg * dg) / (g * g);
                let a_sigma = -dg / g;
                let c_xx = a_coef / (h * h);
                let c_xs = a_coef * 2.0 * a / (4.0 * h * k);
                let c_ss = (a_coef * a * a + b_coef / (g * g)) / (k * k);
                let c_s = a_coef * (a_xi + a * a_sigma) / (2.0 * k);
                let row = idx(i, j);
                let mut push = |ii: isize, jj: usize, v: c64| {
                    if jj == 0 || jj == n2 - 1 || v == c64::new(0.0, 0.0) {
                        return;
                    }
                    if ii >= 0 && (ii as usize) < n1 {
                        trip.push(Triplet::new(row, idx(ii as usize, jj), v));
                    }
                };
                let ii = i as isize;
                push(ii, j, -2.0 * c_xx - 2.0 * c_ss);
                push(ii + 1, j, c_xx);
                push(ii - 1, j, c_xx);
                push(ii, j + 1, c_ss + c_s);
                push(ii, j - 1, c_ss - c_s);
                push(ii + 1, j + 1, c_xs);
                push(ii - 1, j - 1, c_xs);
                push(ii + 1, j - 1, -c_xs);
                push(ii - 1, j + 1, -c_xs);
            }
        }
        // ghost column u_{n1} = M u_{n1-1} and u_{-1} = M u_0
        let z = face_multipliers(problem.c_eps(), h, n2 - 1);
        let nn = (n2 - 1) as f64;
        let c_xx = a_coef / (h * h);
        for jr in 1..n2 - 1 {
            for jc in 1..n2 - 1 {
                let mut acc = c64::new(0.0, 0.0);
                for (mi, zm) in z.iter().enumerate() {
                    let mm = (mi + 1) as f64;
                    acc += zm * (PI * mm * jr as f64 / nn).sin() * (PI * mm * jc as f64 / nn).sin();
                }
                let v = c_xx * acc * (2.0 / nn);
                trip.push(Triplet::new(idx(0, jr), idx(0, jc), v));
                trip.push(Triplet::new(idx(n1 - 1, jr), idx(n1 - 1, jc), v));
            }
        }
        let dim = n1 * m;
        let matrix = SparseColMat::try_new_from_triplets(dim, dim, &trip)
            .map_err(|e| Error::Domain(format!("sparse assembly failed: {e:?}")))?;
        Ok(ResolventOperator { grid, matrix, interior: m })
    }

    fn rhs(&self, source: &SourceTerm) -> Col<c64> {
        let g = &self.grid;
        let m = self.interior;
        Col::from_fn(g.n1 * m, |r| {
            let (i, j) = (r / m, r % m + 1);
            let (x1, x2) = g.point(i, j);
            source.eval(x1, x2)
        })
    }

    fn to_field(&self, sol: &Col<c64>, lambda: f64, topo_hash: String) -> WaveField {
        let mut field = WaveField::zeros(self.grid.clone(), lambda, topo_hash);
        let m = self.interior;
        for i in 0..self.grid.n1 {
            for j in 1..self.grid.n2 - 1 {
                let at = self.grid.index(i, j);
                field.values[at] = sol[i * m + j - 1];
            }
        }
        field
    }

    fn from_field(&self, field: &WaveField) -> Col<c64> {
        let m = self.interior;
        Col::from_fn(self.grid.n1 * m, |r| field.at(r / m, r % m + 1))
    }

    /// `max |L u - f| / max |f|` on the interior nodes.
    pub fn relative_residual(&self, field: &WaveField, source: &SourceTerm) -> f64 {
        let u = self.from_field(field);
        let f = self.rhs(source);
        let lu = &self.matrix * &u;
        let num = (0..f.nrows()).map(|r| (lu[r] - f[r]).norm()).fold(0.0, f64::max);
        let den = (0..f.nrows()).map(|r| f[r].norm()).fold(0.0, f64::max);
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}

/// Solution of a [`ResolventProblem`] on its grid.
pub fn solve_resolvent(problem: &ResolventProblem) -> Result<WaveField> {
    let op = ResolventOperator::assemble(problem)?;
    solve_with(&op, problem)
}

fn solve_with(op: &ResolventOperator, problem: &ResolventProblem) -> Result<WaveField> {
    let lambda = problem.channel.lambda();
    let hash = problem.channel.topo.hash();
    if problem.source.is_zero() {
        return Ok(WaveField::zeros(op.grid.clone(), lambda, hash));
    }
    let lu = op
        .matrix
        .sp_lu()
        .map_err(|e| Error::SingularSystem(format!("sparse LU failed at eps = {}: {e:?}", problem.epsilon)))?;
    let rhs = op.rhs(&problem.source);
    let sol = lu.solve(&rhs);
    if (0..sol.nrows()).any(|r| !sol[r].re.is_finite() || !sol[r].im.is_finite()) {
        return Err(Error::SingularSystem(format!("non-finite solution at eps = {}", problem.epsilon)));
    }
    Ok(op.to_field(&sol, lambda, hash))
}

/// Restriction of a field on a grid refined by `factor` to the coarse nodes.
pub fn restrict(fine: &WaveField, coarse: &Grid, factor: usize) -> WaveField {
    let mut out = WaveField::zeros(coarse.clone(), fine.lambda, fine.topo_hash.clone());
    for i in 0..coarse.n1 {
        for j in 0..coarse.n2 {
            out.values[coarse.index(i, j)] = fine.at(i * factor, j * factor);
        }
    }
    out
}

/// `H^1` change of `chi u` when both spacings are halved, measured on the
/// coarse nodes; warns above [`REFINEMENT_TOL`] relative.
pub fn refinement_change(problem: &ResolventProblem, chi: impl Fn(f64) -> f64 + Copy) -> Result<(f64, Option<Warning>)> {
    let coarse = solve_resolvent(problem)?;
    let fine = solve_resolvent(&problem.refined(2))?;
    let fine_on_coarse = restrict(&fine, &coarse.grid, 2);
    let change = coarse.sub(&fine_on_coarse).cutoff(chi).h1_norm();
    let scale = fine_on_coarse.cutoff(chi).h1_norm().max(f64::MIN_POSITIVE);
    let rel = change / scale;
    let warning = (rel > REFINEMENT_TOL).then_some(Warning::Refinement { change: rel });
    Ok((change, warning))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LapRow {
    pub epsilon: f64,
    pub h1_diff: f64,
    pub h1_norm: f64,
}

#[derive(Debug, Clone)]
pub struct LapTable {
    pub rows: Vec<LapRow>,
    /// `H^1` distance between the smallest-`eps` solutions on the grid and
    /// on the grid with both spacings doubled.
    pub floor: f64,
}

impl LapTable {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].h1_diff < w[0].h1_diff)
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "epsilon,h1_diff,floor")?;
        for r in &self.rows {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", r.epsilon, r.h1_diff, self.floor)?;
        }
        Ok(())
    }
}

/// `||chi (u_eps - reference)||_{H^1}` for each `eps` in `eps_list`, with
/// `reference` sampled on the grid of `template`.
pub fn lap_sweep(
    template: &ResolventProblem,
    eps_list: &[f64],
    chi: impl Fn(f64) -> f64 + Copy + Sync,
    reference: &WaveField,
) -> Result<LapTable> {
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("eps_list must be strictly decreasing".into()));
    }
    if eps_list.is_empty() {
        return Err(Error::Domain("eps_list is empty".into()));
    }
    let grid = template.grid();
    if reference.grid.n1 != grid.n1 || reference.grid.n2 != grid.n2 {
        return Err(Error::Domain("reference field is not on the sweep grid".into()));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    let mut last = None;
    for &eps in eps_list {
        let p = ResolventProblem { epsilon: eps, ..template.clone() };
        let p = ResolventProblem::new(&p.channel, p.epsilon, p.half_width, p.n1, p.n2, &p.source)?;
        let u = solve_resolvent(&p)?;
        let diff = u.sub(reference).cutoff(chi).h1_norm();
        log::info!("lap eps = {eps}: h1 diff {diff:.3e}");
        rows.push(LapRow {
            epsilon: eps,
            h1_diff: diff,
            h1_norm: u.cutoff(chi).h1_norm(),
        });
        last = Some((p, u));
    }
    let (p, u) = last.expect("eps_list non-empty");
    let floor = if p.n1 % 2 == 0 && p.n2 % 2 == 0 {
        let coarse = ResolventProblem { n1: p.n1 / 2, n2: p.n2 / 2, ..p.clone() };
        let uc = solve_resolvent(&coarse)?;
        uc.sub(&restrict(&u, &uc.grid, 2)).cutoff(chi).h1_norm()
    } else {
        let (change, _) = refinement_change(&p, chi)?;
        change
    };
    Ok(LapTable { rows, floor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topography::Topography;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn c_eps_branch() {
        let ch = Channel::new(Topography::flat(), FRAC_1_SQRT_2).unwrap();
        let p = ResolventProblem::new(&ch, 0.1, 10.0, 64, 8, &SourceTerm::zero()).unwrap();
        let c = p.c_eps();
        assert!(c.re > 0.0 && c.im > 0.0);
        let l = p.complex_frequency();
        assert!((c * c * l * l - (1.0 - l * l)).norm() < 1e-14);
    }

    #[test]
    fn multipliers_solve_the_recurrence() {
        let c = c64::new(1.0, 0.05);
        let z = face_multipliers(c, 0.03, 16);
        for (mi, zm) in z.iter().enumerate() {
            assert!(zm.norm() < 1.0);
            let mu = 4.0 * 256.0 * (PI * (mi + 1) as f64 / 32.0).sin().powi(2) / (PI * PI);
            let t = 2.0 - 0.03 * 0.03 * c * c * mu;
            assert!((zm + 1.0 / zm - t).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_problems() {
        let ch = Channel::new(Topography::flat(), FRAC_1_SQRT_2).unwrap();
        let f = SourceTerm::zero();
        assert!(ResolventProblem::new(&ch, 0.0, 10.0, 64, 8, &f).is_err());
        assert!(ResolventProblem::new(&ch, 0.005, 10.0, 64, 8, &f).is_err());
        assert!(ResolventProblem::new(&ch, 0.1, 1.0, 64, 8, &f).is_err());
        let wide = SourceTerm::mode_bump(1, 0.0, 9.5);
        assert!(matches!(ResolventProblem::new(&ch, 0.1, 10.0, 64, 8, &wide), Err(Error::Support(_))));
    }

    #[test]
    fn zero_source_gives_zero() {
        let ch = Channel::new(Topography::gaussian(0.5, 1.0, 0.0), FRAC_1_SQRT_2).unwrap();
        let p = ResolventProblem::new(&ch, 0.1, 9.0, 64, 8, &SourceTerm::zero()).unwrap();
        assert_eq!(solve_resolvent(&p).unwrap().max_abs(), 0.0);
    }
}
