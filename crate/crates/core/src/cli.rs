//! Subcommands, output files and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use faer::c64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

use crate::circle::{max_abs_diff, CircleForm, CircleDiffeo, Sign};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evolution::{evolve, standing_wave_extract, trend_slope, EvolutionTrace};
use crate::geometry::{check_subcritical, BilliardCircleMap, Channel};
use crate::grid::{plateau_cutoff, read_grid, Grid, WaveField};
use crate::oracle::{lap_sweep, ResolventProblem};
use crate::scattering::{flux_balance_defect, write_matrix_csv, ScatteringAssembly};
use crate::stationary::{OutgoingSolution, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Billiard,
    Scatter,
    Solve,
    Lap,
    Evolve,
    Extract,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Billiard => "billiard",
            Command::Scatter => "scatter",
            Command::Solve => "solve",
            Command::Lap => "lap",
            Command::Evolve => "evolve",
            Command::Extract => "extract",
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Format(_) => 1,
        Error::Supercritical { .. } => 2,
        Error::IllConditioned { .. } => 3,
        Error::SingularSystem(_) => 4,
        Error::Support(_) | Error::Window(_) | Error::Continuity { .. } | Error::Stencil(_) => 5,
        Error::Convergence(_) | Error::IterationLimit(_) => 6,
        Error::Stability(_) => 7,
        Error::Io(_) => 8,
    }
}

pub fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Domain(_) => "domain",
        Error::Supercritical { .. } => "supercritical",
        Error::Convergence(_) => "convergence",
        Error::IterationLimit(_) => "iteration_limit",
        Error::IllConditioned { .. } => "ill_conditioned",
        Error::Support(_) => "support",
        Error::Continuity { .. } => "continuity",
        Error::Window(_) => "window",
        Error::Stencil(_) => "stencil",
        Error::SingularSystem(_) => "singular_system",
        Error::Stability(_) => "stability",
        Error::Config(_) => "config",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
    }
}

/// One-line machine-readable error report.
pub fn error_report(err: &Error) -> String {
    format!(
        "status=error kind={} exit={} message={:?}",
        error_kind(err),
        exit_code(err),
        err.to_string()
    )
}

/// Text report plus the files written.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub report: String,
    pub files: Vec<PathBuf>,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer { dir, files: vec![] })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(PathBuf::from(name));
        Ok(BufWriter::new(fs::File::create(path)?))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(body.as_bytes())?;
        Ok(())
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<RunOutput> {
    let mut w = Writer::new(out)?;
    let report = match cmd {
        Command::Check => cmd_check(cfg)?,
        Command::Billiard => cmd_billiard(cfg, &mut w)?,
        Command::Scatter => cmd_scatter(cfg, &mut w)?,
        Command::Solve => cmd_solve(cfg, &mut w)?,
        Command::Lap => cmd_lap(cfg, &mut w)?,
        Command::Evolve => cmd_evolve(cfg, &mut w)?,
        Command::Extract => cmd_extract(cfg, out, &mut w)?,
    };
    w.text(&format!("report_{}.txt", cmd.name()), &report)?;
    let mut files = w.files;
    let manifest = write_manifest(out, cmd, cfg, &files)?;
    files.push(manifest);
    Ok(RunOutput { report, files })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `manifest_<cmd>.txt` listing every output with its checksum.
fn write_manifest(out: &Path, cmd: Command, cfg: &RunConfig, files: &[PathBuf]) -> Result<PathBuf> {
    let mut body = String::new();
    writeln!(body, "command={}", cmd.name()).unwrap();
    writeln!(body, "config_sha256={}", cfg.hash()).unwrap();
    writeln!(body, "seed={}", cfg.seed).unwrap();
    writeln!(body, "topography={}", cfg.topography.hash()).unwrap();
    let mut sorted: Vec<&PathBuf> = files.iter().collect();
    sorted.sort();
    for f in sorted {
        writeln!(body, "file={} sha256={}", f.display(), sha256_file(&out.join(f))?).unwrap();
    }
    let name = PathBuf::from(format!("manifest_{}.txt", cmd.name()));
    fs::write(out.join(&name), body)?;
    Ok(name)
}

fn cmd_check(cfg: &RunConfig) -> Result<String> {
    let mut r = String::new();
    for lambda in cfg.frequencies() {
        let params = match check_subcritical(&cfg.topography, lambda) {
            Ok(p) => p,
            Err(e @ Error::Supercritical { .. }) => {
                writeln!(r, "lambda={lambda} status=supercritical").unwrap();
                print!("{r}");
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let ch = cfg.channel(lambda)?;
        let fi = ch.fundamental_intervals()?;
        writeln!(r, "lambda={lambda}").unwrap();
        writeln!(r, "c={:.12}", params.c).unwrap();
        writeln!(r, "max_slope={:.12}", params.max_slope).unwrap();
        writeln!(r, "margin={:.12}", params.subcritical_margin).unwrap();
        writeln!(r, "M={:.12}", params.m).unwrap();
        writeln!(r, "R0={:.12}", params.r0).unwrap();
        writeln!(r, "N={}", fi.n).unwrap();
        writeln!(r, "J_L=[{:.12}, {:.12})", fi.theta0, fi.theta0 + std::f64::consts::TAU).unwrap();
        writeln!(r, "J_R=[{:.12}, {:.12})", fi.theta_r0, fi.theta_r0 + std::f64::consts::TAU).unwrap();
        writeln!(r, "status=subcritical").unwrap();
    }
    Ok(r)
}

fn cmd_billiard(cfg: &RunConfig, w: &mut Writer) -> Result<String> {
    let mut r = String::new();
    for lambda in cfg.frequencies() {
        let ch = cfg.channel(lambda)?;
        let fi = ch.fundamental_intervals()?;
        let n = cfg.billiard.samples.max(2);
        let span = ch.params.m + 2.0 * std::f64::consts::PI / ch.c();
        let mut b = String::from("x1,b,db\n");
        for i in 0..n {
            let x = -span + 2.0 * span * i as f64 / (n - 1) as f64;
            let (y, d) = ch.billiard_with_derivative(x)?;
            writeln!(b, "{x:.17e},{y:.17e},{d:.17e}").unwrap();
        }
        let map = BilliardCircleMap::new(&ch, fi);
        let mut beta = String::from("phi,beta,dbeta\n");
        let mut integral = 0.0;
        for i in 0..n {
            let phi = std::f64::consts::TAU * i as f64 / n as f64;
            let (y, d) = map.eval(phi);
            integral += d * std::f64::consts::TAU / n as f64;
            writeln!(beta, "{phi:.17e},{y:.17e},{d:.17e}").unwrap();
        }
        w.text(&format!("lambda_{lambda:.6}/billiard.csv"), &b)?;
        w.text(&format!("lambda_{lambda:.6}/circle_map.csv"), &beta)?;
        writeln!(r, "lambda={lambda} N={} degree_integral={integral:.15}", fi.n).unwrap();
    }
    Ok(r)
}

/// Random mean-zero forms supported on `1 <= |k| <= band`.
pub fn random_forms(rng: &mut StdRng, k_max: usize, band: usize, count: usize) -> Vec<CircleForm> {
    (0..count)
        .map(|_| {
            let mut form = CircleForm::zero(k_max);
            for k in (-(band as i64)..=band as i64).filter(|k| *k != 0) {
                form.set_coeff(k, c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
            form
        })
        .collect()
}

fn cmd_scatter(cfg: &RunConfig, w: &mut Writer) -> Result<String> {
    let mut r = String::new();
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    for lambda in cfg.frequencies() {
        let ch = cfg.channel(lambda)?;
        let fi = ch.fundamental_intervals()?;
        let k = cfg.scattering.k_max;
        let asm = ScatteringAssembly::build(&ch, fi, k, cfg.scattering.quadrature())?;
        let rem = asm.smoothing_remainder();
        let dir = format!("lambda_{lambda:.6}");
        write_matrix_csv(asm.scattering_matrix(), k, w.create(&format!("{dir}/S.csv"))?)?;
        write_matrix_csv(&rem.r, k, w.create(&format!("{dir}/R.csv"))?)?;
        let band = (k / 4).max(1);
        let forms = random_forms(&mut rng, k, band, cfg.scattering.samples);
        let u_half = asm.unitarity_defect(&forms, 0.5);
        let u_minus = asm.unitarity_defect(&forms, -0.5);
        let mut flux_half: f64 = 0.0;
        let mut flux_minus: f64 = 0.0;
        for g in &forms {
            let g_in = g.project(Sign::Plus);
            let data = asm.solve_homogeneous_data(&g_in);
            flux_half = flux_half.max(flux_balance_defect(&data.v_l, &data.v_r, 0.5));
            flux_minus = flux_minus.max(flux_balance_defect(&data.v_l, &data.v_r, -0.5));
        }
        let identity = max_abs_diff(asm.scattering_matrix(), &faer::Mat::identity(2 * k, 2 * k));
        writeln!(r, "lambda={lambda}").unwrap();
        writeln!(r, "k_max={k}").unwrap();
        writeln!(r, "cond_t={:.6e}", asm.cond_t).unwrap();
        writeln!(r, "sigma_min_t={:.6e}", asm.sigma_min_t).unwrap();
        writeln!(r, "identity_defect={identity:.6e}").unwrap();
        writeln!(r, "unitarity_defect_h_half={u_half:.6e}").unwrap();
        writeln!(r, "unitarity_defect_h_minus_half={u_minus:.6e}").unwrap();
        writeln!(r, "flux_balance_defect_h_half={flux_half:.6e}").unwrap();
        writeln!(r, "flux_balance_defect_h_minus_half={flux_minus:.6e}").unwrap();
        for (n, c) in rem.decay {
            writeln!(r, "decay_constant_{n}={c:.6e}").unwrap();
        }
        writeln!(
            r,
            "unitarity_status={}",
            if u_half <= cfg.tolerances.unitarity { "pass" } else { "fail" }
        )
        .unwrap();
        if k >= 2 {
            // inner-band agreement with the half-size section
            let coarse = ScatteringAssembly::build(&ch, fi, k / 2, 16 * (k / 2))?;
            let inner = (k / 4).max(1);
            let mut diff: f64 = 0.0;
            for g in random_forms(&mut rng, k, inner, 4) {
                let fine = asm.apply_s(&g).band_limited(inner);
                let c = coarse.apply_s(&g.resized(k / 2)).band_limited(inner).resized(k);
                diff = diff.max(fine.sub(&c).l2_coeff_norm() / g.l2_coeff_norm());
            }
            writeln!(r, "inner_band_agreement_k{}_vs_k{k}={diff:.6e}", k / 2).unwrap();
        }
        for warn in &asm.warnings {
            writeln!(r, "warning={warn}").unwrap();
        }
    }
    Ok(r)
}

fn default_half_width(ch: &Channel, configured: f64) -> f64 {
    if configured > 0.0 {
        configured
    } else {
        ch.params.r0 + 8.0
    }
}

fn cmd_solve(cfg: &RunConfig, w: &mut Writer) -> Result<String> {
    let mut r = String::new();
    let source = cfg.source();
    for lambda in cfg.frequencies() {
        let ch = cfg.channel(lambda)?;
        source.validate(&ch)?;
        let fi = ch.fundamental_intervals()?;
        let k = cfg.scattering.k_max;
        let l = default_half_width(&ch, cfg.solve.half_width);
        let asm = ScatteringAssembly::build(&ch, fi, k, cfg.scattering.quadrature())?;
        let sol = OutgoingSolution::solve(&ch, fi, &asm, &source, SolveOptions::for_k(k, l))?;
        let grid = Grid::symmetric(&ch.topo, l, cfg.solve.n1, cfg.solve.n2);
        let field = sol.reconstruct(&grid)?;
        let dir = format!("lambda_{lambda:.6}");
        field.write_grid(w.create(&format!("{dir}/field.bin"))?, true)?;
        sol.data.v_l.write_csv(w.create(&format!("{dir}/v_l.csv"))?)?;
        sol.data.v_r.write_csv(w.create(&format!("{dir}/v_r.csv"))?)?;
        let samples = 4 * k + 4;
        let nl = sol.neumann_form(fi.theta0, k, samples, cfg.solve.neumann_step)?;
        let nr = sol.neumann_form(fi.theta_r0, k, samples, cfg.solve.neumann_step)?;
        let rel = |a: &CircleForm, v: &CircleForm| {
            let n = v.l2_coeff_norm();
            let d = a.add(v).l2_coeff_norm();
            if n == 0.0 {
                d
            } else {
                d / n
            }
        };
        let neumann = rel(&nl, &sol.data.v_l).max(rel(&nr, &sol.data.v_r));
        let ok = sol.data.transport_residual <= cfg.tolerances.transport
            && sol.data.outgoing_defect.0 <= cfg.tolerances.outgoing
            && sol.data.outgoing_defect.1 <= cfg.tolerances.outgoing
            && neumann <= cfg.tolerances.neumann;
        writeln!(r, "lambda={lambda}").unwrap();
        writeln!(r, "transport_residual={:.6e}", sol.data.transport_residual).unwrap();
        writeln!(r, "outgoing_defect_left={:.6e}", sol.data.outgoing_defect.0).unwrap();
        writeln!(r, "outgoing_defect_right={:.6e}", sol.data.outgoing_defect.1).unwrap();
        writeln!(r, "neumann_mismatch={neumann:.6e}").unwrap();
        writeln!(r, "field_h1_norm={:.6e}", field.h1_norm()).unwrap();
        writeln!(r, "dirichlet_defect={:.6e}", field.dirichlet_defect()).unwrap();
        writeln!(r, "status={}", if ok { "pass" } else { "fail" }).unwrap();
        for warn in asm.warnings.iter().chain(&sol.warnings) {
            writeln!(r, "warning={warn}").unwrap();
        }
    }
    Ok(r)
}

fn cmd_lap(cfg: &RunConfig, w: &mut Writer) -> Result<String> {
    let mut r = String::new();
    let source = cfg.source();
    for lambda in cfg.frequencies() {
        let ch = cfg.channel(lambda)?;
        let fi = ch.fundamental_intervals()?;
        let l = default_half_width(&ch, cfg.lap.half_width);
        let eps0 = *cfg.lap.eps.first().ok_or_else(|| Error::Config("lap.eps is empty".into()))?;
        let template = ResolventProblem::new(&ch, eps0, l, cfg.lap.n1, cfg.lap.n2, &source)?;
        let k = cfg.scattering.k_max;
        let asm = ScatteringAssembly::build(&ch, fi, k, cfg.scattering.quadrature())?;
        let sol = OutgoingSolution::solve(&ch, fi, &asm, &source, SolveOptions::for_k(k, l))?;
        let reference = sol.reconstruct(&template.grid())?;
        let r0 = ch.params.r0;
        let chi = plateau_cutoff(r0 + cfg.lap.chi_inner, r0 + cfg.lap.chi_outer);
        let table = lap_sweep(&template, &cfg.lap.eps, chi, &reference)?;
        let dir = format!("lambda_{lambda:.6}");
        table.write_csv(w.create(&format!("{dir}/lap.csv"))?)?;
        writeln!(r, "lambda={lambda}").unwrap();
        for row in &table.rows {
            writeln!(r, "eps={} h1_diff={:.6e} h1_norm={:.6e}", row.epsilon, row.h1_diff, row.h1_norm).unwrap();
        }
        writeln!(r, "floor={:.6e}", table.floor).unwrap();
        writeln!(r, "reference_h1_norm={:.6e}", reference.cutoff(chi).h1_norm()).unwrap();
        writeln!(r, "strictly_decreasing={}", table.strictly_decreasing()).unwrap();
    }
    Ok(r)
}

fn cmd_evolve(cfg: &RunConfig, w: &mut Writer) -> Result<String> {
    let mut r = String::new();
    let source = cfg.source();
    for lambda in cfg.frequencies() {
        let ch = cfg.channel(lambda)?;
        let ecfg = cfg.evolution_config(lambda);
        let trace = evolve(&ecfg, &ch.topo, &source)?;
        let dir = format!("lambda_{lambda:.6}");
        write_trace(&trace, w, &dir)?;
        let t = ecfg.t_final;
        writeln!(r, "lambda={lambda}").unwrap();
        writeln!(r, "l_evo={:.6}", ecfg.l_evo).unwrap();
        writeln!(r, "steps={}", trace.h1_series.len() - 1).unwrap();
        writeln!(r, "snapshots={}", trace.snapshots.len()).unwrap();
        writeln!(r, "final_h1_norm={:.6e}", trace.h1_series.last().map(|p| p.1).unwrap_or(0.0)).unwrap();
        writeln!(r, "trend_slope={:.6e}", trend_slope(&trace.h1_series, (t / 2.0, t))).unwrap();
    }
    Ok(r)
}

fn write_trace(trace: &EvolutionTrace, w: &mut Writer, dir: &str) -> Result<()> {
    let mut csv = String::from("step,time,h1_norm\n");
    for (step, (t, h)) in trace.h1_series.iter().enumerate() {
        writeln!(csv, "{step},{t:.17e},{h:.17e}").unwrap();
    }
    w.text(&format!("{dir}/trace.csv"), &csv)?;
    let mut snaps = String::from("index,time,file\n");
    for (k, (t, values)) in trace.snapshot_times.iter().zip(&trace.snapshots).enumerate() {
        let name = format!("{dir}/snapshots/snap_{k:06}.bin");
        let field = WaveField {
            grid: trace.report_grid.clone(),
            values: values.iter().map(|v| c64::new(*v, 0.0)).collect(),
            lambda: trace.lambda,
            topo_hash: trace.topo_hash.clone(),
        };
        field.write_grid(w.create(&name)?, false)?;
        writeln!(snaps, "{k},{t:.17e},snapshots/snap_{k:06}.bin").unwrap();
    }
    w.text(&format!("{dir}/snapshots.csv"), &snaps)?;
    Ok(())
}

/// Reads the snapshots of an `evolve` run back into a trace.
pub fn read_trace(dir: &Path, topo: &crate::topography::Topography, lambda: f64, dt: f64) -> Result<EvolutionTrace> {
    let list = fs::read_to_string(dir.join("snapshots.csv"))?;
    let mut times = vec![];
    let mut snaps = vec![];
    let mut grid = None;
    for line in list.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Format(format!("bad snapshot line {line:?}")));
        }
        let t: f64 = parts[1].parse().map_err(|_| Error::Format(format!("bad time in {line:?}")))?;
        let f = read_grid(BufReader::new(fs::File::open(dir.join(parts[2]))?), topo)?;
        times.push(t);
        snaps.push(f.values.iter().map(|z| z.re).collect());
        grid = Some(f.grid);
    }
    let report_grid = grid.ok_or_else(|| Error::Format("no snapshots listed".into()))?;
    let mut series = vec![];
    if let Ok(text) = fs::read_to_string(dir.join("trace.csv")) {
        for line in text.lines().skip(1) {
            let p: Vec<&str> = line.split(',').collect();
            if p.len() == 3 {
                if let (Ok(t), Ok(h)) = (p[1].parse(), p[2].parse()) {
                    series.push((t, h));
                }
            }
        }
    }
    Ok(EvolutionTrace {
        lambda,
        dt,
        report_grid,
        snapshot_times: times,
        snapshots: snaps,
        h1_series: series,
        energy_series: vec![],
        topo_hash: topo.hash(),
    })
}

fn cmd_extract(cfg: &RunConfig, out: &Path, w: &mut Writer) -> Result<String> {
    let mut r = String::new();
    let source = cfg.source();
    let base = if cfg.evolution.trace_dir.is_empty() {
        out.to_path_buf()
    } else {
        PathBuf::from(&cfg.evolution.trace_dir)
    };
    for lambda in cfg.frequencies() {
        let ch = cfg.channel(lambda)?;
        let fi = ch.fundamental_intervals()?;
        let ecfg = cfg.evolution_config(lambda);
        let dir = format!("lambda_{lambda:.6}");
        let trace = read_trace(&base.join(&dir), &ch.topo, lambda, ecfg.dt)?;
        let t = ecfg.t_final;
        let profile = standing_wave_extract(&trace, (t / 2.0, t))?;
        profile.write_grid(w.create(&format!("{dir}/profile.bin"))?, true)?;
        let k = cfg.scattering.k_max;
        let asm = ScatteringAssembly::build(&ch, fi, k, cfg.scattering.quadrature())?;
        let sol = OutgoingSolution::solve(&ch, fi, &asm, &source, SolveOptions::for_k(k, ecfg.l_report + 1.0))?;
        let reference = sol.reconstruct(&trace.report_grid)?.cutoff(ecfg.cutoff());
        let norm = reference.h1_norm();
        let err = profile.sub(&reference).h1_norm();
        writeln!(r, "lambda={lambda}").unwrap();
        writeln!(r, "window=[{}, {}]", t / 2.0, t).unwrap();
        writeln!(r, "profile_h1_norm={:.6e}", profile.h1_norm()).unwrap();
        writeln!(r, "reference_h1_norm={norm:.6e}").unwrap();
        writeln!(r, "relative_h1_error={:.6e}", if norm > 0.0 { err / norm } else { err }).unwrap();
    }
    Ok(r)
}
