//! One function per subcommand. Each writes its artifacts under the output
//! directory and returns whether every hard gate passed.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use stablelt_core::artifacts::{svg_plot, write_csv, write_verdict, Series, Status, Verdict};
use stablelt_core::experiments::{
    intersection_identity_check, lil_tracker, scaling_check, tail_ldp_fit, tail_self_test,
};
use stablelt_core::localtime::{mollified_local_time, occupation_histogram, sup_local_time};
use stablelt_core::model::{rho_upper_bound, QuadratureSpec};
use stablelt_core::moments::{
    exp_time_moment_mc_with, exp_time_moment_quadrature, exp_time_moment_sim_with, first_moment,
    moment_growth_diagnostic, McSpec, SimSpec,
};
use stablelt_core::rng::StreamRng;
use stablelt_core::stablesim::{map_replicas, simulate_sheet, TimeGrid};
use stablelt_core::stats::linear_fit;
use stablelt_core::variational::lattice::{discrete_growth_envelope, DEFAULT_BUDGET};
use stablelt_core::variational::rho::random_pair;
use stablelt_core::variational::{
    alternating_lower_bound, discrete_moment_bruteforce, discrete_moment_multiset, m_psi_from_rho,
    m_psi_theta_factor, rho_lower_bound_pair, solve_m_psi, solve_rho, solve_rho_lattice, solve_rho_m,
    VariationalSolution,
};
use stablelt_core::{LocalTimeField, ModelParams, SpatialGrid};

use crate::config::RunConfig;

pub type CmdResult = Result<bool, Box<dyn std::error::Error>>;

pub struct Ctx {
    pub cfg: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub svg: bool,
}

impl Ctx {
    fn params(&self) -> ModelParams {
        self.cfg.model.params()
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn finish(&self, v: Verdict) -> CmdResult {
        let ok = !v.is_hard_failure();
        let path = write_verdict(&self.out, &v)?;
        println!("{}: {:?} ({})", v.name, v.status, path.display());
        Ok(ok)
    }

    fn svg(&self, file: &str, body: String) -> std::io::Result<()> {
        if self.svg {
            fs::write(self.path(file), body)?;
        }
        Ok(())
    }

    /// `rho` on the configured grid, used as the reference constant.
    fn rho_hat(&self) -> Result<VariationalSolution, Box<dyn std::error::Error>> {
        let r = &self.cfg.rho;
        Ok(solve_rho(&self.params(), &r.grid(self.params().d)?, &r.ascent(self.seed))?)
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

pub fn simulate(ctx: &Ctx) -> CmdResult {
    let prm = ctx.params();
    let c = &ctx.cfg.simulate;
    let grid = TimeGrid::new(c.t_max, c.steps)?;
    let sheet = simulate_sheet(&prm, &grid, ctx.seed, c.stream);
    let file = ctx.path("sheet.bin");
    sheet.write_binary(std::io::BufWriter::new(fs::File::create(&file)?))?;
    let d = prm.d;
    let rows: Vec<Vec<f64>> = (0..=grid.steps)
        .map(|k| {
            let mut row = vec![grid.time(k)];
            for j in 0..prm.p {
                row.extend_from_slice(sheet.point(j, k));
            }
            row
        })
        .collect();
    let mut header = vec!["t".to_string()];
    for j in 1..=prm.p {
        for a in 1..=d {
            header.push(format!("x{j}_{a}"));
        }
    }
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_csv(&ctx.path("sheet.csv"), &header, &rows)?;
    let finals: Vec<Vec<f64>> = (0..prm.p).map(|j| sheet.point(j, grid.steps).to_vec()).collect();
    ctx.finish(
        Verdict::new("simulate", json!({"model": prm, "simulate": c}), "none", Status::Diagnostic, ctx.seed)
            .value("final_positions", finals)
            .value("file", "sheet.bin"),
    )
}

pub fn localtime(ctx: &Ctx) -> CmdResult {
    let prm = ctx.params();
    let c = &ctx.cfg.localtime;
    let grid = TimeGrid::with_step(c.t, 1.0 / c.steps_per_unit as f64)?;
    let time_box = vec![c.t; prm.p];
    let w = c
        .bin_width
        .unwrap_or_else(|| SpatialGrid::natural_bin_width(&prm, grid.dt()));
    let expected = c.t.powi(prm.p as i32);
    let results: Vec<Result<(LocalTimeField, Option<f64>), stablelt_core::Error>> =
        map_replicas(c.sheets, 0, |s| {
            let sheet = simulate_sheet(&prm, &grid, ctx.seed, s);
            let sgrid = SpatialGrid::auto(&sheet, &time_box, w, w)?;
            let field = occupation_histogram(&sheet, &sgrid, &time_box)?;
            let moll = match c.epsilon {
                Some(e) => Some(mollified_local_time(&sheet, e, &vec![0.0; prm.d], &time_box)?),
                None => None,
            };
            Ok((field, moll))
        });
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    let mut first: Option<LocalTimeField> = None;
    for (i, r) in results.into_iter().enumerate() {
        let (field, moll) = r?;
        let s = field.summary();
        worst = worst.max(rel_gap(s.mass, expected));
        let (_, sup) = sup_local_time(&field);
        rows.push(vec![i as f64, s.mass, s.origin, sup, moll.unwrap_or(f64::NAN)]);
        if first.is_none() {
            first = Some(field);
        }
    }
    write_csv(
        &ctx.path("localtime_summary.csv"),
        &["sheet", "mass", "origin", "sup", "mollified_origin"],
        &rows,
    )?;
    if let Some(f) = first {
        f.write_csv(std::io::BufWriter::new(fs::File::create(ctx.path("localtime_field.csv"))?))?;
    }
    let ok = worst <= 1e-10;
    ctx.finish(
        Verdict::new(
            "localtime",
            json!({"model": prm, "localtime": c}),
            "mass = t^p to 1e-10 relative",
            Status::from_check(ok),
            ctx.seed,
        )
        .value("worst_mass_error", worst)
        .value("bin_width", w)
        .value("sheets", c.sheets),
    )
}

pub fn moments(ctx: &Ctx) -> CmdResult {
    let prm = ctx.params();
    let c = &ctx.cfg.moments;
    let exact = first_moment(&prm)?;
    let mut rows = Vec::new();
    let mut ok = true;
    let mut checks = serde_json::Map::new();
    let mut growth_input = Vec::new();
    for &n in &c.orders {
        let quad = if c.quadrature && prm.d == 1 && n <= 2 {
            Some(exp_time_moment_quadrature(&prm, n)?)
        } else {
            None
        };
        let mc = exp_time_moment_mc_with(&prm, n, &McSpec::new(c.mc_samples, ctx.seed))?;
        let sim = exp_time_moment_sim_with(
            &prm,
            n,
            &SimSpec {
                replicas: c.sim_replicas,
                dt: c.sim_dt,
                epsilon: c.sim_epsilon,
                seed: ctx.seed,
            },
        )?;
        growth_input.push((n, quad.as_ref().map(|q| q.value).unwrap_or(mc.value)));
        rows.push(vec![
            n as f64,
            quad.as_ref().map(|q| q.value).unwrap_or(f64::NAN),
            quad.as_ref().and_then(|q| q.tail).unwrap_or(f64::NAN),
            mc.value,
            mc.std_error,
            sim.value,
            sim.std_error,
            sim.band.unwrap_or(f64::NAN),
        ]);
        if n == 1 {
            let q_ok = quad.as_ref().is_none_or(|q| rel_gap(q.value, exact) <= 0.005);
            let mc_ok = (mc.value - exact).abs() <= 3.0 * mc.std_error + 1e-6 * exact;
            let sim_ok = (sim.value - exact).abs() <= 3.0 * sim.std_error + sim.band.unwrap_or(0.0);
            ok &= q_ok && mc_ok && sim_ok;
            checks.insert("first_moment".into(), json!(exact));
            checks.insert("quadrature_ok".into(), json!(q_ok));
            checks.insert("importance_ok".into(), json!(mc_ok));
            checks.insert("simulation_ok".into(), json!(sim_ok));
        }
        checks.insert(format!("n{n}"), json!({"quadrature": quad, "importance": mc, "simulation": sim}));
    }
    write_csv(
        &ctx.path("moments.csv"),
        &["n", "quadrature", "quadrature_tail", "importance", "importance_se", "simulation", "simulation_se", "simulation_band"],
        &rows,
    )?;
    let mut v = Verdict::new(
        "moments",
        json!({"model": prm, "moments": c}),
        "n=1: quadrature 0.5%, importance 3 se, simulation 3 se + band",
        Status::from_check(ok),
        ctx.seed,
    );
    v.values = checks;
    if growth_input.len() > 1 {
        let rho = ctx.rho_hat()?.value;
        v = v.value("growth", moment_growth_diagnostic(&prm, &growth_input, rho));
    }
    ctx.finish(v)
}

pub fn rho(ctx: &Ctx) -> CmdResult {
    let prm = ctx.params();
    let r = &ctx.cfg.rho;
    let grid = r.grid(prm.d)?;
    let opts = r.ascent(ctx.seed);
    let sol = solve_rho(&prm, &grid, &opts)?;
    let ub = rho_upper_bound(&prm, &QuadratureSpec::default())?;
    let mut ok = sol.value > 0.0 && sol.value <= ub.value * (1.0 + 1e-6) && sol.history_monotone();
    let mut v = Verdict::new(
        "rho",
        json!({"model": prm, "rho": r}),
        "value <= upper bound; refinement drift <= 2%; lower-bound pairs <= value + 5%",
        Status::Pass,
        ctx.seed,
    )
    .value("value", sol.value)
    .value("upper_bound", ub.value)
    .value("iterations", sol.iterations)
    .value("grad_norm", sol.grad_norm)
    .value("converged", sol.converged)
    .value("restarts", sol.restarts)
    .value("grid", sol.grid);
    let trace: Vec<Vec<f64>> = sol.history.iter().enumerate().map(|(i, v)| vec![i as f64, *v]).collect();
    write_csv(&ctx.path("rho_trace.csv"), &["iteration", "value"], &trace)?;
    let f = sol.maximizer();
    let rows: Vec<Vec<f64>> = (0..f.values.len())
        .map(|k| {
            let mut row = f.spec.point(k);
            row.push(f.values[k]);
            row
        })
        .collect();
    let mut header: Vec<String> = (1..=prm.d).map(|a| format!("x{a}")).collect();
    header.push("f".into());
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_csv(&ctx.path("rho_maximizer.csv"), &header, &rows)?;
    if r.refine {
        let fine = solve_rho(&prm, &grid.refined(), &opts)?;
        let drift = rel_gap(fine.value, sol.value);
        ok &= drift <= 0.02;
        v = v.value("refined_value", fine.value).value("refinement_drift", drift);
    }
    if prm.p >= 2 && r.pairs > 0 {
        let mut rng = StreamRng::new(ctx.seed, 1 << 32);
        let mut worst: f64 = 0.0;
        for _ in 0..r.pairs {
            let (f, g) = random_pair(&grid, prm.p, &mut rng);
            worst = worst.max(rho_lower_bound_pair(&prm, &f, &g)?);
        }
        let alt = alternating_lower_bound(&prm, &grid, r.alternating_sweeps, 50)?;
        ok &= worst <= 1.05 * sol.value && alt.value <= 1.05 * sol.value && alt.value >= 0.9 * sol.value;
        v = v
            .value("random_pairs_max", worst)
            .value("alternating_lower_bound", alt.value);
    }
    v.status = Status::from_check(ok);
    ctx.svg(
        "rho_trace.svg",
        svg_plot(
            "ascent history",
            "iteration",
            "objective",
            &[Series {
                label: "best restart",
                points: &trace.iter().map(|r| (r[0], r[1])).collect::<Vec<_>>(),
                markers: false,
            }],
        ),
    )?;
    ctx.finish(v)
}

pub fn rho_lattice(ctx: &Ctx) -> CmdResult {
    let c = &ctx.cfg.lattice;
    let model = c.model()?;
    let opts = ctx.cfg.rho.ascent(ctx.seed);
    let sol = solve_rho_lattice(&model, &opts, c.tail_tol)?;
    let ok = sol.value > 0.0 && sol.solution.history_monotone();
    ctx.finish(
        Verdict::new(
            "rho-lattice",
            json!({"lattice": c}),
            "boundary mass <= tail_tol",
            Status::from_check(ok),
            ctx.seed,
        )
        .value("value", sol.value)
        .value("boundary_mass", sol.boundary_mass)
        .value("iterations", sol.solution.iterations)
        .value("converged", sol.solution.converged),
    )
}

pub fn rho_m(ctx: &Ctx) -> CmdResult {
    let prm = ctx.params();
    let c = &ctx.cfg.rho_m;
    let rho = ctx.rho_hat()?.value;
    let two_pi_d = (2.0 * PI).powi(prm.d as i32);
    let target = rho / two_pi_d;
    let ub = rho_upper_bound(&prm, &QuadratureSpec::default())?.value / two_pi_d;
    let opts = ctx.cfg.rho.ascent(ctx.seed);
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    let mut envelope_ok = true;
    for &m in &c.m {
        let s = solve_rho_m(&prm, m, c.half_width, &opts, c.tail_tol)?;
        let gap = rel_gap(s.normalized, target);
        envelope_ok &= s.normalized <= ub * 1.05 && s.rho_m > 0.0;
        rows.push(vec![m, s.rho_m, s.normalized, target, gap]);
        gaps.push(gap);
    }
    write_csv(&ctx.path("rho_m.csv"), &["M", "rho_M", "normalized", "target", "gap"], &rows)?;
    let final_gap = *gaps.last().expect("nonempty");
    let shrinking = gaps.windows(2).all(|w| w[1] <= w[0]);
    let ok = final_gap <= 0.05 && envelope_ok && shrinking;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[0].log2(), r[2])).collect();
    let tgt: Vec<(f64, f64)> = rows.iter().map(|r| (r[0].log2(), target)).collect();
    ctx.svg(
        "rho_m.svg",
        svg_plot(
            "normalized periodized constant",
            "log2 M",
            "M^-d rho_M",
            &[
                Series { label: "M^-d rho_M", points: &pts, markers: true },
                Series { label: "(2pi)^-d rho", points: &tgt, markers: false },
            ],
        ),
    )?;
    ctx.finish(
        Verdict::new(
            "rho-m",
            json!({"model": prm, "rho_m": c}),
            "final gap <= 5%, gaps nonincreasing, below (2pi)^-d upper bound + 5%",
            Status::from_check(ok),
            ctx.seed,
        )
        .value("rho", rho)
        .value("target", target)
        .value("gaps", gaps)
        .value("final_gap", final_gap),
    )
}

pub fn mpsi(ctx: &Ctx) -> CmdResult {
    let prm = ctx.params();
    let c = &ctx.cfg.mpsi;
    let spec = c.spec(prm.d)?;
    let opts = ctx.cfg.rho.ascent(ctx.seed);
    let m1 = solve_m_psi(&prm, &spec, &opts)?;
    let m2 = solve_m_psi(&prm, &spec.with_theta(c.theta), &opts)?;
    let rho = ctx.rho_hat()?.value;
    let predicted = m_psi_from_rho(&prm, rho);
    let gap = rel_gap(m1.value, predicted);
    let scale_expected = m_psi_theta_factor(&prm, c.theta);
    let scale_gap = rel_gap(m2.value / m1.value, scale_expected);
    let ok = m1.value > 0.0 && gap <= 0.05 && scale_gap <= 0.03;
    ctx.finish(
        Verdict::new(
            "mpsi",
            json!({"model": prm, "mpsi": c}),
            "M_psi vs rho prediction within 5%; theta scaling within 3%",
            Status::from_check(ok),
            ctx.seed,
        )
        .value("m_psi", m1.value)
        .value("predicted_from_rho", predicted)
        .value("rho", rho)
        .value("gap", gap)
        .value("theta", c.theta)
        .value("m_psi_theta", m2.value)
        .value("theta_factor_expected", scale_expected)
        .value("theta_factor_gap", scale_gap)
        .value("converged", m1.converged && m2.converged),
    )
}

pub fn discrete(ctx: &Ctx) -> CmdResult {
    let c = &ctx.cfg.discrete;
    let lc = &ctx.cfg.lattice;
    let model = lc.model()?;
    let opts = ctx.cfg.rho.ascent(ctx.seed);
    let sol = solve_rho_lattice(&model, &opts, lc.tail_tol)?;
    let budget = if c.budget > 0.0 { c.budget } else { DEFAULT_BUDGET };
    let envelope = discrete_growth_envelope(&model)?;
    let mut rows = Vec::new();
    let mut cross_ok = true;
    let mut env_ok = true;
    for n in c.n_min..=c.n_max {
        let s = discrete_moment_bruteforce(&model, n, budget)?;
        let m = discrete_moment_multiset(&model, n)?;
        cross_ok &= rel_gap(m, s) <= 1e-10;
        env_ok &= s.ln() / n as f64 <= envelope + 1e-12;
        rows.push(vec![n as f64, s, m, s.ln()]);
    }
    write_csv(&ctx.path("discrete.csv"), &["n", "bruteforce", "multiset", "log_s"], &rows)?;
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let slope = linear_fit(&xs, &ys).slope;
    let log_rho = sol.value.ln();
    let gap = rel_gap(slope, log_rho);
    let ok = gap <= 0.15 && cross_ok && env_ok;
    ctx.finish(
        Verdict::new(
            "discrete",
            json!({"lattice": lc, "discrete": c}),
            "slope of log S_n within 15% of log rho~",
            Status::from_check(ok),
            ctx.seed,
        )
        .value("slope", slope)
        .value("log_rho_lattice", log_rho)
        .value("rho_lattice", sol.value)
        .value("relative_gap", gap)
        .value("multiset_agrees", cross_ok)
        .value("envelope", envelope),
    )
}

pub fn tails(ctx: &Ctx) -> CmdResult {
    let prm = ctx.params();
    let c = &ctx.cfg.tails;
    let rho = ctx.rho_hat()?.value;
    let rep = tail_ldp_fit(&prm, rho, c, ctx.seed)?;
    let power = prm.alpha / prm.d as f64;
    let synth = tail_self_test(rep.kappa, power, c, ctx.seed)?;
    let synth_gap = rel_gap(synth.slope, -rep.kappa);
    let mut ok = rep.passes(0.9, 2.0) && synth_gap <= 0.05;
    if let Some(r) = rep.sup_ratio {
        ok &= (r - 1.0).abs() <= 0.25;
    }
    let o = &rep.origin;
    let rows: Vec<Vec<f64>> = (0..o.thresholds.len())
        .map(|i| {
            vec![
                o.thresholds[i],
                o.regressor[i],
                o.counts[i] as f64,
                o.log_prob[i],
                o.log_prob_lo[i],
                o.log_prob_hi[i],
            ]
        })
        .collect();
    write_csv(
        &ctx.path("tails.csv"),
        &["threshold", "regressor", "count", "log_prob", "log_prob_lo", "log_prob_hi"],
        &rows,
    )?;
    let emp: Vec<(f64, f64)> = rows.iter().map(|r| (r[1], r[3])).collect();
    let fit: Vec<(f64, f64)> = rows.iter().map(|r| (r[1], o.intercept + o.slope * r[1])).collect();
    let theory: Vec<(f64, f64)> = rows.iter().map(|r| (r[1], o.intercept - rep.kappa * r[1])).collect();
    ctx.svg(
        "tails.svg",
        svg_plot(
            "upper tail at the origin",
            "t^(alpha/d)",
            "log P",
            &[
                Series { label: "empirical", points: &emp, markers: true },
                Series { label: "fit", points: &fit, markers: false },
                Series { label: "slope -kappa", points: &theory, markers: false },
            ],
        ),
    )?;
    ctx.finish(
        Verdict::new(
            "tails",
            json!({"model": prm, "tails": c}),
            "R^2 > 0.9, slope within factor 2 of -kappa; self-test within 5%",
            Status::from_check(ok),
            ctx.seed,
        )
        .value("rho", rho)
        .value("kappa", rep.kappa)
        .value("slope", o.slope)
        .value("intercept", o.intercept)
        .value("r_squared", o.r_squared)
        .value("slope_ratio", rep.slope_ratio)
        .value("sup_slope", rep.sup.as_ref().map(|s| s.slope))
        .value("sup_ratio", rep.sup_ratio)
        .value("self_test_slope", synth.slope)
        .value("self_test_gap", synth_gap),
    )
}

pub fn scaling(ctx: &Ctx) -> CmdResult {
    let prm = ctx.params();
    let c = &ctx.cfg.scaling;
    let rep = scaling_check(&prm, c, ctx.seed)?;
    let ok = rep.passes(0.01);
    ctx.finish(
        Verdict::new(
            "scaling",
            json!({"model": prm, "scaling": c}),
            "KS p > 0.01 after rescaling; perturbed exponent p < 0.01",
            Status::from_check(ok),
            ctx.seed,
        )
        .value("exponent", rep.exponent)
        .value("origin", rep.origin)
        .value("sup", rep.sup)
        .value("control_origin", rep.control_origin)
        .value("control_sup", rep.control_sup),
    )
}

pub fn lil(ctx: &Ctx) -> CmdResult {
    let prm = ctx.params();
    let c = &ctx.cfg.lil;
    let rho = ctx.rho_hat()?.value;
    let tr = lil_tracker(&prm, c, rho, ctx.seed)?;
    let rows: Vec<Vec<f64>> = tr
        .checkpoints
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let mut row = vec![*t, tr.running_max[k]];
            row.extend(tr.values.iter().map(|v| v[k]));
            row
        })
        .collect();
    let mut header = vec!["t".to_string(), "running_max".to_string()];
    header.extend((0..tr.values.len()).map(|i| format!("path{i}")));
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_csv(&ctx.path("lil.csv"), &header, &rows)?;
    let rm: Vec<(f64, f64)> = rows.iter().map(|r| (r[0].log10(), r[1])).collect();
    let cl: Vec<(f64, f64)> = rows.iter().map(|r| (r[0].log10(), tr.c_lil)).collect();
    ctx.svg(
        "lil.svg",
        svg_plot(
            "LIL running maximum",
            "log10 t",
            "R(t)",
            &[
                Series { label: "running max", points: &rm, markers: false },
                Series { label: "c_lil", points: &cl, markers: false },
            ],
        ),
    )?;
    ctx.finish(
        Verdict::new(
            "lil",
            json!({"model": prm, "lil": c}),
            "diagnostic: final running max within [0.05, 20] c_lil",
            Status::Diagnostic,
            ctx.seed,
        )
        .value("final_running_max", tr.final_running_max)
        .value("c_lil", tr.c_lil)
        .value("ratio", tr.ratio)
        .value("within_bracket", tr.within_bracket),
    )
}

pub fn identity(ctx: &Ctx) -> CmdResult {
    let prm = ctx.params();
    let c = &ctx.cfg.identity;
    let rep = intersection_identity_check(&prm, c, ctx.seed)?;
    let ok = rep.passes(0.01);
    ctx.finish(
        Verdict::new(
            "identity",
            json!({"model": prm, "identity": c}),
            "KS p > 0.01; dependent control p < 0.01; means within 3 se",
            Status::from_check(ok),
            ctx.seed,
        )
        .value("report", rep),
    )
}

pub fn report(out: &Path) -> CmdResult {
    let summary = stablelt_core::artifacts::summarize(out)?;
    for row in &summary.verdicts {
        println!("{:<14} {:<10} {}", row.name, format!("{:?}", row.status).to_lowercase(), row.tolerance);
    }
    println!(
        "passed {}, failed {}, diagnostic {}",
        summary.passed, summary.failed, summary.diagnostic
    );
    stablelt_core::artifacts::write_json(&out.join("summary.json"), &summary)?;
    Ok(summary.all_hard_gates_pass)
}
