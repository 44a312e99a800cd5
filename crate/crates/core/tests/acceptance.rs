//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if a gating criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRunner};
use stablelt_core::artifacts::{write_csv, write_json};
use stablelt_core::experiments::{
    intersection_identity_check, lil_tracker, scaling_check, tail_ldp_fit, tail_self_test, IdentityConfig,
    LilConfig, ScalingConfig, TailConfig,
};
use stablelt_core::localtime::{occupation_histogram, SpatialGrid};
use stablelt_core::model::{rho_upper_bound, QuadratureSpec};
use stablelt_core::moments::{
    exp_time_moment_mc, exp_time_moment_quadrature, exp_time_moment_sim, perm_prefix_sum_dp,
    perm_prefix_sum_naive,
};
use stablelt_core::stablesim::{map_replicas, simulate_sheet};
use stablelt_core::stats::linear_fit;
use stablelt_core::variational::lattice::{DEFAULT_BUDGET, DEFAULT_TAIL_TOL};
use stablelt_core::variational::rho::random_pair;
use stablelt_core::variational::{
    discrete_moment_bruteforce, m_psi_from_rho, rho_lower_bound_pair, solve_m_psi, solve_rho,
    solve_rho_lattice, solve_rho_m, AscentOptions, MpsiSpec,
};
use stablelt_core::{FrequencyTuple, GridSpec, LatticeModel, ModelParams, StreamRng, TimeGrid};

const SEED: u64 = 20240611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn opts() -> AscentOptions {
    AscentOptions { seed: SEED, ..Default::default() }
}

fn rho_hat() -> f64 {
    let prm = ModelParams::cauchy_pair();
    solve_rho(&prm, &GridSpec::default_for(1), &opts())
        .unwrap()
        .value
}

fn combinatorial_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = StreamRng::new(SEED, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = 1 + rng.below(7);
        let d = 1 + rng.below(2);
        let pts: Vec<f64> = (0..n * d).map(|_| rng.below(7) as f64 - 3.0).collect();
        // Q is an arbitrary positive table over the reachable integer points.
        let table: Vec<f64> = (0..43 * 43).map(|_| rng.uniform(0.01, 2.0)).collect();
        let q = |v: &[f64]| {
            let i = (v[0] + 21.0) as usize;
            let j = v.get(1).map_or(0, |y| (y + 21.0) as usize);
            table[i * 43 + j]
        };
        let t = FrequencyTuple::new(d, pts).unwrap();
        let a = perm_prefix_sum_dp(&t, q).unwrap();
        let b = perm_prefix_sum_naive(&t, q).unwrap();
        worst = worst.max(rel(a, b));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-12 && secs < 10.0, format!("max rel error {worst:.2e}, {secs:.2} s"))
}

fn closed_form_moment() -> Outcome {
    let prm = ModelParams::cauchy_pair();
    let exact = 1.0 / PI;
    let q = exp_time_moment_quadrature(&prm, 1).unwrap();
    let mc = exp_time_moment_mc(&prm, 1, 200_000, SEED).unwrap();
    let sim = exp_time_moment_sim(&prm, 1, 4000, SEED).unwrap();
    let band = sim.band.unwrap_or(0.0);
    let q_ok = rel(q.value, exact) <= 0.005;
    // The importance weights are constant at n = 1, so the standard error is
    // only roundoff; a 1e-6 relative floor covers the inner quadrature.
    let mc_ok = (mc.value - exact).abs() <= 3.0 * mc.std_error + 1e-6 * exact;
    let sim_ok = (sim.value - exact).abs() <= 3.0 * sim.std_error + band;
    outcome(
        q_ok && mc_ok && sim_ok,
        format!(
            "quadrature {:.6}, importance {:.6} +- {:.1e}, simulation {:.5} +- {:.5} (band {:.5}); 1/pi = {exact:.6}",
            q.value, mc.value, mc.std_error, sim.value, sim.std_error, band
        ),
    )
}

fn mass_conservation() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        rng_algorithm: RngAlgorithm::ChaCha,
        ..Config::default()
    });
    let strategy = (1usize..=2, 1usize..=3, 0.8f64..2.0, 0.2f64..3.0, 0.3f64..2.5, 10usize..60, any::<u64>());
    let worst = std::cell::Cell::new(0.0f64);
    let result = runner.run(&strategy, |(d, p, alpha, c, t, steps, seed)| {
        prop_assume!((d as f64) < alpha * p as f64);
        let prm = ModelParams::new(d, p, alpha, c).unwrap();
        let grid = TimeGrid::new(t, steps).unwrap();
        let sheet = simulate_sheet(&prm, &grid, seed, 0);
        let tb = vec![t; p];
        let w = SpatialGrid::natural_bin_width(&prm, grid.dt()).max(0.05);
        let sg = SpatialGrid::auto(&sheet, &tb, w, w).unwrap();
        let field = occupation_histogram(&sheet, &sg, &tb).unwrap();
        let err = rel(field.mass(), t.powi(p as i32));
        worst.set(worst.get().max(err));
        prop_assert!(err <= 1e-10, "mass error {}", err);
        Ok(())
    });
    outcome(result.is_ok(), format!("100 random sheets, max rel error {:.2e}", worst.get()))
}

fn scaling_law() -> Outcome {
    let prm = ModelParams::cauchy_pair();
    let rep = scaling_check(&prm, &ScalingConfig::default(), SEED).unwrap();
    outcome(
        rep.passes(0.01),
        format!(
            "origin p {:.3}, sup p {:.3}; controls {:.1e}, {:.1e}",
            rep.origin.p_value,
            rep.sup.as_ref().map_or(f64::NAN, |r| r.p_value),
            rep.control_origin.p_value,
            rep.control_sup.as_ref().map_or(f64::NAN, |r| r.p_value)
        ),
    )
}

fn variational_consistency(rho: f64) -> Outcome {
    let prm = ModelParams::cauchy_pair();
    let spec = GridSpec::default_for(1);
    let ub = rho_upper_bound(&prm, &QuadratureSpec::default()).unwrap().value;
    let fine = solve_rho(&prm, &spec.refined(), &opts()).unwrap().value;
    let mut rng = StreamRng::new(SEED, 7);
    let mut best: f64 = 0.0;
    for _ in 0..20 {
        let (f, g) = random_pair(&spec, 2, &mut rng);
        best = best.max(rho_lower_bound_pair(&prm, &f, &g).unwrap());
    }
    let drift = rel(fine, rho);
    outcome(
        rho <= 2.0 && (ub - 2.0).abs() < 1e-6 && drift <= 0.02 && best <= 1.05 * rho,
        format!("rho {rho:.6} (bound {ub:.6}), refined drift {:.2}%, best pair {best:.4}", 100.0 * drift),
    )
}

fn m_psi_cross_check(rho: f64) -> Outcome {
    let prm = ModelParams::cauchy_pair();
    let m = solve_m_psi(&prm, &MpsiSpec::default_for(1), &opts())
        .unwrap()
        .value;
    let target = m_psi_from_rho(&prm, rho);
    let gap = rel(m, target);
    outcome(gap <= 0.05, format!("M_psi {m:.6} vs rho/(2pi) {target:.6}, gap {:.2}%", 100.0 * gap))
}

fn periodized_trend(rho: f64) -> Outcome {
    let prm = ModelParams::cauchy_pair();
    let target = rho / (2.0 * PI);
    let mut vals = Vec::new();
    for m in [8.0, 16.0, 32.0, 64.0] {
        vals.push(solve_rho_m(&prm, m, 40.0, &opts(), DEFAULT_TAIL_TOL).unwrap().normalized);
    }
    let gaps: Vec<f64> = vals.iter().map(|v| rel(*v, target)).collect();
    let last = gaps[gaps.len() - 1];
    let shrinking = gaps.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        last <= 0.05 && shrinking,
        format!("M^-1 rho_M = {vals:.5?} vs {target:.5}, final gap {:.2}%", 100.0 * last),
    )
}

fn lattice_trend() -> Outcome {
    let start = Instant::now();
    let model = LatticeModel::small_instance();
    let rho = solve_rho_lattice(&model, &opts(), DEFAULT_TAIL_TOL)
        .unwrap()
        .value;
    let ns: Vec<f64> = (5..=9).map(|n| n as f64).collect();
    let logs: Vec<f64> = (5..=9)
        .map(|n| discrete_moment_bruteforce(&model, n, DEFAULT_BUDGET).unwrap().ln())
        .collect();
    let slope = linear_fit(&ns, &logs).slope;
    let gap = rel(slope, rho.ln());
    let secs = start.elapsed().as_secs_f64();
    outcome(
        gap <= 0.15 && secs < 300.0,
        format!("slope {slope:.4} vs log rho~ {:.4}, gap {:.1}%, {secs:.1} s", rho.ln(), 100.0 * gap),
    )
}

fn tail_reproduction(rho: f64) -> Outcome {
    let prm = ModelParams::cauchy_pair();
    let cfg = TailConfig::default();
    let rep = tail_ldp_fit(&prm, rho, &cfg, SEED).unwrap();
    let synth = tail_self_test(rep.kappa, prm.alpha / prm.d as f64, &cfg, SEED).unwrap();
    let synth_gap = rel(synth.slope, -rep.kappa);
    outcome(
        rep.passes(0.9, 2.0) && synth_gap <= 0.05,
        format!(
            "N {}, slope {:.4} vs -kappa {:.4} (ratio {:.3}), R^2 {:.4}; self-test gap {:.2}%",
            rep.origin.samples,
            rep.origin.slope,
            -rep.kappa,
            rep.slope_ratio,
            rep.origin.r_squared,
            100.0 * synth_gap
        ),
    )
}

fn identity() -> Outcome {
    let prm = ModelParams::cauchy_pair();
    let rep = intersection_identity_check(&prm, &IdentityConfig::default(), SEED).unwrap();
    outcome(
        rep.passes(0.01),
        format!(
            "KS p {:.3}, mean gap {:.2} se; dependent control p {:.1e}",
            rep.ks.p_value, rep.mean_gap_se, rep.dependent_ks.p_value
        ),
    )
}

fn lil_diagnostic(rho: f64) -> Outcome {
    let prm = ModelParams::cauchy_pair();
    let tr = lil_tracker(&prm, &LilConfig::default(), rho, SEED).unwrap();
    outcome(
        tr.within_bracket,
        format!("final running max {:.4}, c_lil {:.4}, ratio {:.3}", tr.final_running_max, tr.c_lil, tr.ratio),
    )
}

/// Writes a small campaign into `dir` using a pool of `workers` threads.
fn campaign(dir: &Path, workers: usize) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
    pool.install(|| {
        let prm = ModelParams::cauchy_pair();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let rows: Vec<Vec<f64>> = map_replicas(24, 0, |s| {
            let sheet = simulate_sheet(&prm, &grid, SEED, s);
            let w = SpatialGrid::natural_bin_width(&prm, grid.dt());
            let sg = SpatialGrid::auto(&sheet, &[1.0, 1.0], w, w).unwrap();
            let f = occupation_histogram(&sheet, &sg, &[1.0, 1.0]).unwrap();
            vec![s as f64, f.mass(), f.origin_value()]
        });
        write_csv(&dir.join("fields.csv"), &["stream", "mass", "origin"], &rows).unwrap();
        let cfg = ScalingConfig { samples: 60, with_sup: false, ..ScalingConfig::default() };
        write_json(&dir.join("scaling.json"), &scaling_check(&prm, &cfg, SEED).unwrap()).unwrap();
        let sol = solve_rho(&prm, &GridSpec::new(1, 10.0, 0.1).unwrap(), &opts()).unwrap();
        write_json(&dir.join("rho.json"), &sol).unwrap();
        let mc = exp_time_moment_mc(&prm, 2, 5000, SEED).unwrap();
        write_json(&dir.join("moment.json"), &mc).unwrap();
    });
}

fn determinism() -> Outcome {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    campaign(dirs[0].path(), 2);
    campaign(dirs[1].path(), 2);
    campaign(dirs[2].path(), 1);
    let names = ["fields.csv", "scaling.json", "rho.json", "moment.json"];
    let mut same = true;
    for name in names {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        for d in &dirs[1..] {
            same &= a == std::fs::read(d.path().join(name)).unwrap();
        }
    }
    outcome(
        same,
        format!("{} result files byte-identical across 3 runs (2, 2 and 1 workers)", names.len()),
    )
}

type Check = Box<dyn Fn() -> Outcome>;

fn main() -> ExitCode {
    let rho = rho_hat();
    let criteria: Vec<(u32, &str, bool, Check)> = vec![
        (1, "combinatorial exactness", true, Box::new(combinatorial_exactness)),
        (2, "closed-form first moment", true, Box::new(closed_form_moment)),
        (3, "mass conservation", true, Box::new(mass_conservation)),
        (4, "scaling law", true, Box::new(scaling_law)),
        (5, "variational consistency", true, Box::new(move || variational_consistency(rho))),
        (6, "M_psi cross-check", true, Box::new(move || m_psi_cross_check(rho))),
        (7, "periodized trend", true, Box::new(move || periodized_trend(rho))),
        (8, "lattice growth trend", true, Box::new(lattice_trend)),
        (9, "tail reproduction", true, Box::new(move || tail_reproduction(rho))),
        (10, "intersection identity", true, Box::new(identity)),
        (11, "LIL diagnostic", false, Box::new(move || lil_diagnostic(rho))),
        (12, "determinism", true, Box::new(determinism)),
    ];
    let mut failed = 0;
    for (id, name, gating, run) in criteria {
        let start = Instant::now();
        let o = run();
        let tag = match (o.pass, gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        if !o.pass && gating {
            failed += 1;
        }
        let note = if gating { "" } else { " [non-gating]" };
        println!(
            "criterion {id:>2} {tag} {name}{note}: {} ({:.1} s)",
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        println!("acceptance: all gating criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} gating criteria failed");
        ExitCode::FAILURE
    }
}
