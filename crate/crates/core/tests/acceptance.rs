//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so every line is printed. Criteria in
//! `EXPECTED_FAIL` are reported at their stated tolerance but do not fail
//! the binary; any other failure, or an expected failure that starts
//! passing, does.

mod common;

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::time::Instant;

use faer::{c64, Mat};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use subwave::circle::{max_abs_diff, CircleDiffeo};
use subwave::cli::random_forms;
use subwave::evolution::{evolve, standing_wave_extract, trend_slope, EvolutionConfig};
use subwave::geometry::{BilliardCircleMap, Channel};
use subwave::grid::{plateau_cutoff, Grid, WaveField};
use subwave::oracle::{lap_sweep, ResolventProblem};
use subwave::quadrature::Rule;
use subwave::scattering::ScatteringAssembly;
use subwave::source::SourceTerm;
use subwave::stationary::{OutgoingSolution, SolveOptions};
use subwave::topography::Topography;

const EXPECTED_FAIL: [u32; 3] = [2, 3, 7];

struct Verdict {
    pass: bool,
    detail: String,
}

fn gaussian() -> Topography {
    Topography::gaussian(0.5, 1.0, 0.0)
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut worst_s: f64 = 0.0;
    let mut worst_r: f64 = 0.0;
    for lambda in [0.3, FRAC_1_SQRT_2, 0.9] {
        let ch = Channel::new(Topography::flat(), lambda).unwrap();
        let fi = ch.fundamental_intervals().unwrap();
        let asm = ScatteringAssembly::build(&ch, fi, 128, 2048).unwrap();
        worst_s = worst_s.max(max_abs_diff(asm.scattering_matrix(), &Mat::identity(256, 256)));
        worst_r = worst_r.max(max_abs_diff(&asm.smoothing_remainder().r, &Mat::zeros(256, 256)));
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        pass: worst_s <= 1e-10 && worst_r <= 1e-10 && secs < 5.0,
        detail: format!("max|S-I| = {worst_s:.2e}, max|R| = {worst_r:.2e}, {secs:.2} s"),
    }
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let ch = Channel::new(gaussian(), FRAC_1_SQRT_2).unwrap();
    let fi = ch.fundamental_intervals().unwrap();
    let asm = ScatteringAssembly::build(&ch, fi, 256, 4096).unwrap();
    let mut rng = StdRng::seed_from_u64(2);
    let forms = random_forms(&mut rng, 256, 64, 100);
    let half = asm.unitarity_defect(&forms, 0.5);
    let minus_half = asm.unitarity_defect(&forms, -0.5);
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        pass: half <= 1e-8 && secs < 60.0,
        detail: format!("H^1/2 defect {half:.2e} (H^-1/2 defect {minus_half:.2e}), {secs:.2} s"),
    }
}

fn criterion_3() -> Verdict {
    let ch = Channel::new(gaussian(), FRAC_1_SQRT_2).unwrap();
    let fi = ch.fundamental_intervals().unwrap();
    let asm = ScatteringAssembly::build(&ch, fi, 128, 2048).unwrap();
    let mut rng = StdRng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut worst_form: f64 = 0.0;
    for v in random_forms(&mut rng, 128, 32, 20) {
        let bv = asm.b.apply(&v);
        let f0 = v.quantum_flux();
        worst = worst.max((bv.quantum_flux() - f0).abs() / (1.0 + f0.abs()));
        let g0 = v.form_flux();
        worst_form = worst_form.max((bv.form_flux() - g0).abs() / (1.0 + g0.abs()));
    }
    Verdict {
        pass: worst <= 1e-8,
        detail: format!("max |F(b*v)-F(v)|/(1+|F(v)|) = {worst:.2e} (flux of primitive: {worst_form:.2e})"),
    }
}

fn criterion_4() -> Verdict {
    let ch = Channel::new(gaussian(), FRAC_1_SQRT_2).unwrap();
    let fi = ch.fundamental_intervals().unwrap();
    let c = [128usize, 256].map(|k| {
        ScatteringAssembly::build(&ch, fi, k, 16 * k)
            .unwrap()
            .smoothing_remainder()
            .constant(4)
    });
    let ratio = (c[1] / c[0]).max(c[0] / c[1]);
    Verdict {
        pass: ratio < 2.0 && c.iter().all(|x| x.is_finite()),
        detail: format!("C4(K=128) = {:.4}, C4(K=256) = {:.4}, ratio {ratio:.4}", c[0], c[1]),
    }
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let lambda = FRAC_1_SQRT_2;
    let ch = Channel::new(Topography::flat(), lambda).unwrap();
    let fi = ch.fundamental_intervals().unwrap();
    let l = ch.params.r0 + 8.0;
    let asm = ScatteringAssembly::build(&ch, fi, 128, 2048).unwrap();
    let (center, radius) = (0.0, 1.5);
    let f = SourceTerm::mode_bump(1, center, radius);
    let sol = OutgoingSolution::solve(&ch, fi, &asm, &f, SolveOptions::for_k(128, l)).unwrap();
    let grid = Grid::symmetric(&ch.topo, l, 1024, 128);
    let u = sol.reconstruct(&grid).unwrap();
    let c = ch.c();
    let profile: Vec<c64> = (0..grid.n1)
        .map(|i| common::mode_oracle(lambda, c, center - radius, center + radius, |s| common::bump8((s - center) / radius), grid.x1(i)))
        .collect();
    let mut oracle = WaveField::zeros(grid.clone(), lambda, ch.topo.hash());
    for i in 0..grid.n1 {
        for j in 0..grid.n2 {
            oracle.values[grid.index(i, j)] = profile[i] * grid.point(i, j).1.sin();
        }
    }
    let rel = u.sub(&oracle).h1_norm() / oracle.h1_norm();
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        pass: rel <= 1e-3 && secs < 60.0,
        detail: format!("H^1 relative error {rel:.2e} on 1024x128, {secs:.2} s"),
    }
}

fn criterion_6() -> Verdict {
    let ch = Channel::new(gaussian(), FRAC_1_SQRT_2).unwrap();
    let fi = ch.fundamental_intervals().unwrap();
    let k = 128;
    let asm = ScatteringAssembly::build(&ch, fi, k, 16 * k).unwrap();
    let mut rng = StdRng::seed_from_u64(6);
    let mut transport: f64 = 0.0;
    let mut outgoing: f64 = 0.0;
    let mut neumann: f64 = 0.0;
    for _ in 0..3 {
        let f = SourceTerm::blob(
            c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            rng.random_range(-4.0..4.0),
            rng.random_range(1.0..2.0),
            rng.random_range(-1.6..-1.0),
            rng.random_range(0.4..0.8),
        );
        let sol = OutgoingSolution::solve(&ch, fi, &asm, &f, SolveOptions::for_k(k, 8.0)).unwrap();
        transport = transport.max(sol.data.transport_residual);
        outgoing = outgoing.max(sol.data.outgoing_defect.0).max(sol.data.outgoing_defect.1);
        for (start, v) in [(fi.theta0, &sol.data.v_l), (fi.theta_r0, &sol.data.v_r)] {
            let extracted = sol.neumann_form(start, k, 4 * k + 4, 2e-3).unwrap();
            neumann = neumann.max(extracted.add(v).l2_coeff_norm() / v.l2_coeff_norm());
        }
    }
    Verdict {
        pass: transport <= 1e-8 && outgoing <= 1e-10 && neumann <= 1e-6,
        detail: format!("transport {transport:.2e}, outgoing {outgoing:.2e}, Neumann {neumann:.2e}"),
    }
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let ch = Channel::new(gaussian(), FRAC_1_SQRT_2).unwrap();
    let fi = ch.fundamental_intervals().unwrap();
    let r0 = ch.params.r0;
    let l = r0 + 8.0;
    let f = SourceTerm::blob(c64::new(1.0, 0.0), 0.5, 1.5, -1.5, 1.0);
    let asm = ScatteringAssembly::build(&ch, fi, 128, 2048).unwrap();
    let sol = OutgoingSolution::solve(&ch, fi, &asm, &f, SolveOptions::for_k(128, l)).unwrap();
    let template = ResolventProblem::new(&ch, 0.2, l, 1024, 128, &f).unwrap();
    let reference = sol.reconstruct(&template.grid()).unwrap();
    let chi = plateau_cutoff(r0 + 2.0, r0 + 4.0);
    let table = lap_sweep(&template, &[0.2, 0.1, 0.05, 0.025], chi, &reference).unwrap();
    let last = table.rows.last().unwrap().h1_diff;
    let secs = start.elapsed().as_secs_f64();
    let diffs: Vec<String> = table.rows.iter().map(|r| format!("{:.3e}", r.h1_diff)).collect();
    Verdict {
        pass: table.strictly_decreasing() && last <= 5.0 * table.floor && secs < 600.0,
        detail: format!(
            "diffs [{}], floor {:.2e}, final/floor {:.0}, {secs:.1} s",
            diffs.join(", "),
            table.floor,
            last / table.floor
        ),
    }
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let lambda = FRAC_1_SQRT_2;
    let t_final = 400.0;
    let mut pass = true;
    let mut parts = vec![];
    for (name, topo) in [("flat", Topography::flat()), ("gaussian", gaussian())] {
        let ch = Channel::new(topo.clone(), lambda).unwrap();
        let fi = ch.fundamental_intervals().unwrap();
        let f = SourceTerm::mode_bump(1, 0.0, 1.5);
        let l_report = 10.0;
        let cfg = EvolutionConfig {
            lambda,
            t_final,
            dt: 0.25,
            l_evo: EvolutionConfig::required_half_width(l_report, t_final),
            l_report,
            chi_ramp: 2.0,
            cells_per_unit: 10.0,
            n2: 32,
            snapshot_stride: 2,
            record_from: 50.0,
            forcing_off: None,
        };
        let trace = evolve(&cfg, &topo, &f).unwrap();
        let asm = ScatteringAssembly::build(&ch, fi, 64, 1024).unwrap();
        let sol = OutgoingSolution::solve(&ch, fi, &asm, &f, SolveOptions::for_k(64, l_report + 1.0)).unwrap();
        let reference = sol.reconstruct(&trace.report_grid).unwrap().cutoff(cfg.cutoff());
        let norm = reference.h1_norm();
        let errs: Vec<f64> = [100.0, 200.0, 400.0]
            .iter()
            .map(|&t| standing_wave_extract(&trace, (t / 2.0, t)).unwrap().sub(&reference).h1_norm() / norm)
            .collect();
        let slope = trend_slope(&trace.h1_series, (t_final / 2.0, t_final));
        pass &= errs[1] < errs[0] && errs[2] < errs[1] && errs[2] <= 0.1 && slope.abs() <= 1e-3;
        parts.push(format!(
            "{name}: errors {:.3e} {:.3e} {:.3e}, slope {slope:.1e}",
            errs[0], errs[1], errs[2]
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        pass: pass && secs < 1200.0,
        detail: format!("{}; {secs:.1} s", parts.join("; ")),
    }
}

fn criterion_9() -> Verdict {
    let start = Instant::now();
    let topo = gaussian();
    let lambda = FRAC_1_SQRT_2;
    let ch = Channel::new(topo.clone(), lambda).unwrap();
    let c = ch.c();
    let m = ch.params.m;
    let mut bis: f64 = 0.0;
    let mut fd: f64 = 0.0;
    for i in 0..=400 {
        let x = -m + 2.0 * m * i as f64 / 400.0;
        let (b, db) = ch.billiard_with_derivative(x).unwrap();
        bis = bis.max((b - common::billiard_by_bisection(&topo, c, x)).abs());
        let h = 1e-5;
        let num = (ch.billiard(x + h).unwrap() - ch.billiard(x - h).unwrap()) / (2.0 * h);
        fd = fd.max((num - db).abs() / db.abs());
    }
    let fi = ch.fundamental_intervals().unwrap();
    let map = BilliardCircleMap::new(&ch, fi);
    let rule = Rule::new(20);
    let panels = 256;
    let degree: f64 = (0..panels)
        .map(|p| {
            let a = TAU * p as f64 / panels as f64;
            rule.integrate(a, a + TAU / panels as f64, |phi| map.eval(phi).1)
        })
        .sum();
    let secs = start.elapsed().as_secs_f64();
    let deg_err = (degree - 2.0 * PI).abs();
    Verdict {
        pass: bis <= 1e-10 && fd <= 1e-6 && deg_err <= 1e-8 && secs < 5.0,
        detail: format!("bisection {bis:.2e}, b' vs FD {fd:.2e}, |int beta' - 2pi| {deg_err:.2e}, {secs:.2} s"),
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 9] = [
        (1, "flat-channel identity", criterion_1),
        (2, "unitarity in H^1/2", criterion_2),
        (3, "flux conservation", criterion_3),
        (4, "smoothing remainder", criterion_4),
        (5, "resolvent vs mode oracle", criterion_5),
        (6, "transport and outgoing conditions", criterion_6),
        (7, "limiting absorption", criterion_7),
        (8, "standing-wave limit", criterion_8),
        (9, "geometry oracles", criterion_9),
    ];
    // optional comma-separated subset, e.g. ACCEPTANCE_ONLY=1,9
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut unexpected = vec![];
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let v = run();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let expected_fail = EXPECTED_FAIL.contains(&id);
        let note = match (v.pass, expected_fail) {
            (false, true) => " [known failure]",
            (true, true) => " [expected to fail but passed]",
            _ => "",
        };
        println!("criterion {id} ({name}): {tag}{note} - {}", v.detail);
        if v.pass == expected_fail {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
