//! Acceptance suite: one line per criterion, nonzero exit if any fails.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use co2bayes_core::assessment::{DEFAULT_ENSEMBLE_RUNS, ThresholdTriple};
use co2bayes_core::diagnostics::TestStatistic;
use co2bayes_core::rng::{derive_seed, stream, Domain};
use co2bayes_core::{
    closed_form_ode, compute_ecai, estimate_occupancy, fit_threshold_curve, posterior_predictive, presets,
    prior_sensitivity, sample_posterior, simulate_ode, simulate_sde, summarize, threshold_empirical,
    threshold_ensemble, AchRate, EcaPolicy, Ensemble, MitigationScenario, ModelParams, Param, PriorSet, PriorSpec,
    RoomGeometry, SamplerConfig,
};
use common::{code, p, run, snapshot, stdout};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const CHAMBER_V: f64 = 19_320.0;

fn c1_ode_oracle() -> Outcome {
    let p = ModelParams::from_ach(1.9, CHAMBER_V, 420.0, 0.013, 0.0).map_err(|e| e.to_string())?;
    let max_rel = |dt_s: f64| {
        let s = simulate_ode(420.0, &p, CHAMBER_V, 3.0, dt_s / 3600.0).unwrap();
        s.iter()
            .map(|(t, c)| {
                let exact = closed_form_ode(420.0, &p, CHAMBER_V, t / 3600.0).unwrap();
                (c - exact).abs() / exact
            })
            .fold(0.0, f64::max)
    };
    let (e1, e_half) = (max_rel(1.0), max_rel(0.5));
    check(
        e1 < 0.005 && e_half <= e1 / 2.0,
        format!("max rel err {e1:.3e} at 1 s, {e_half:.3e} at 0.5 s (ratio {:.4})", e1 / e_half),
    )
}

fn c2_sde_consistency() -> Outcome {
    let (ach, sigma) = (1.9, 72.7);
    let p = ModelParams::from_ach(ach, CHAMBER_V, 420.0, 0.013, sigma).map_err(|e| e.to_string())?;
    let ens = Ensemble::simulate(420.0, &p, CHAMBER_V, 3.0, 1.0 / 3600.0, 1000, 2024).map_err(|e| e.to_string())?;
    let (mean, se) = ens.mean_and_se();
    let n = ens.times_s.len();
    let mut worst = 0.0f64;
    for k in 1..=10 {
        let j = k * (n - 1) / 10;
        let exact = closed_form_ode(420.0, &p, CHAMBER_V, ens.times_s[j] / 3600.0).unwrap();
        worst = worst.max((mean[j] - exact).abs() / se[j]);
    }
    // variance across runs, averaged over the final hour (over 3.8 time constants in)
    let tail: Vec<usize> = (0..n).filter(|&j| ens.times_s[j] >= 7200.0).collect();
    let runs = ens.runs.len() as f64;
    let var = tail
        .iter()
        .map(|&j| {
            let m = ens.runs.iter().map(|r| r[j]).sum::<f64>() / runs;
            ens.runs.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (runs - 1.0)
        })
        .sum::<f64>()
        / tail.len() as f64;
    let target = sigma * sigma / (2.0 * ach);
    let rel = var / target - 1.0;
    check(
        worst < 3.0 && rel.abs() < 0.15,
        format!(
            "worst checkpoint |mean - exact| = {worst:.2} SE; tail sd {:.2} vs {:.2} ({:+.1}% variance)",
            var.sqrt(),
            target.sqrt(),
            100.0 * rel
        ),
    )
}

fn decay_priors() -> PriorSet {
    PriorSet::default().with(Param::E, PriorSpec::fixed(0.0))
}

fn c3_decay_recovery() -> Outcome {
    let mut worst = 0.0f64;
    let mut misses = Vec::new();
    for name in ["test1", "test2", "test3"] {
        let preset = presets::get(name).unwrap();
        for seed in 1..=3u64 {
            let data = preset.simulate(seed).map_err(|e| e.to_string())?;
            let s = sample_posterior(&decay_priors(), &data, preset.volume_l(), &SamplerConfig::default(), seed)
                .map_err(|e| e.to_string())?;
            let sum = summarize(&s, 0.95).map_err(|e| e.to_string())?;
            let rel = (sum.q_ach.mean / preset.q_ach - 1.0).abs();
            worst = worst.max(rel);
            if rel >= 0.05 || !sum.q_ach.contains(preset.q_ach) || !s.converged() {
                misses.push(format!("{name}/seed{seed}: mean {:.3}", sum.q_ach.mean));
            }
        }
    }
    check(
        misses.is_empty(),
        format!("9 fits, worst relative error {:.2}%; misses: {misses:?}", 100.0 * worst),
    )
}

fn c4_injection_recovery() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["test4", "test5", "test6", "test7"] {
        let preset = presets::get(name).unwrap();
        let data = preset.simulate(1).map_err(|e| e.to_string())?;
        let s = sample_posterior(&PriorSet::default(), &data, preset.volume_l(), &SamplerConfig::default(), 1)
            .map_err(|e| e.to_string())?;
        let sum = summarize(&s, 0.95).map_err(|e| e.to_string())?;
        let eq = (sum.q_ach.mean / preset.q_ach - 1.0).abs();
        let ee = (sum.e_lps.mean / preset.e_lps - 1.0).abs();
        let this = eq < 0.15
            && ee < 0.15
            && sum.q_ach.contains(preset.q_ach)
            && sum.e_lps.contains(preset.e_lps)
            && s.converged();
        ok &= this;
        lines.push(format!("{name} Q {:+.1}% E {:+.1}%{}", 100.0 * eq, 100.0 * ee, if this { "" } else { " (miss)" }));
    }
    check(ok, lines.join(", "))
}

fn c5_prior_sensitivity() -> Outcome {
    let preset = presets::get("test4").unwrap();
    let data = preset.simulate(1).map_err(|e| e.to_string())?;
    let sets = PriorSet::sensitivity_sets();
    let report = prior_sensitivity(&data, preset.volume_l(), &sets, &SamplerConfig::default(), 1)
        .map_err(|e| e.to_string())?;
    let mut worst = (String::new(), 0.0f64);
    for (name, _) in &sets[1..] {
        let shift = report.shift("default", name, Param::Q).unwrap().abs();
        if shift > worst.1 {
            worst = (name.clone(), shift);
        }
    }
    let sd = |n: &str| report.run(n).unwrap().summary.q_ach.sd;
    let narrower = sd("informative_q") < sd("default");
    check(
        worst.1 < 0.5 && narrower,
        format!(
            "largest Q shift {:.3} pooled sd ({}); Q sd default {:.3} vs informative {:.3}",
            worst.1,
            worst.0,
            sd("default"),
            sd("informative_q")
        ),
    )
}

fn c6_ppc_calibration() -> Outcome {
    let preset = presets::get("test4").unwrap();
    let data = preset.simulate(31).map_err(|e| e.to_string())?;
    let s = sample_posterior(&PriorSet::default(), &data, preset.volume_l(), &SamplerConfig::default(), 31)
        .map_err(|e| e.to_string())?;
    let good = posterior_predictive(&s, &data, preset.volume_l(), 1000, TestStatistic::Mean, 31)
        .map_err(|e| e.to_string())?
        .bayesian_p;
    let bad = posterior_predictive(&s, &data.shifted(500.0), preset.volume_l(), 1000, TestStatistic::Mean, 31)
        .map_err(|e| e.to_string())?
        .bayesian_p;
    check(
        (0.2..=0.8).contains(&good) && bad < 0.05,
        format!("self-consistent p = {good:.3}, shifted p = {bad:.4}"),
    )
}

fn c7_ecai() -> Outcome {
    let policy = EcaPolicy::default();
    let v = RoomGeometry::classroom1().volume_l();
    let n = estimate_occupancy(0.044, &policy).map_err(|e| e.to_string())?;
    let q = AchRate::new(0.35).unwrap();
    let base = compute_ecai(q, v, n, &MitigationScenario::none()).map_err(|e| e.to_string())?;
    let expected = [12.8, 23.3, 33.8, 44.3, 54.8];
    let mut got = Vec::new();
    let mut ok = n == 9 && (base - 2.3).abs() <= 0.05;
    for (k, cadr) in [200.0, 400.0, 600.0, 800.0, 1000.0].into_iter().enumerate() {
        let e = compute_ecai(q, v, n, &MitigationScenario::single("d", cadr).unwrap()).map_err(|e| e.to_string())?;
        ok &= (e - expected[k]).abs() <= 0.05;
        got.push(format!("{e:.2}"));
    }
    check(ok, format!("occupancy {n}, ECAi {base:.2}; with CADR 200..1000: {}", got.join(", ")))
}

fn c8_threshold_equations() -> Outcome {
    let cases = [
        (0.0, [829.1, 684.6, 540.1]),
        (300.0, [1069.1, 894.6, 690.1]),
        (600.0, [1309.1, 1104.6, 840.1]),
        (601.0, [1309.1, 1104.6, 840.1]),
        (1000.0, [1309.1, 1104.6, 840.1]),
    ];
    let mut ok = true;
    for (cadr, want) in cases {
        let t = threshold_empirical(cadr).map_err(|e| e.to_string())?;
        let got = [t.c_limit, t.c_target, t.c_ideal];
        // printed to one decimal
        ok &= got.iter().zip(want).all(|(g, w)| (g - w).abs() < 0.05);
    }
    check(ok, "CADR 0, 300, 600, 601, 1000 match to 0.1 ppm".into())
}

/// Total emission per day for the first classroom across three seasons.
const CLASSROOM1_E: [f64; 15] = [
    0.044, 0.079, 0.09, 0.083, 0.088, 0.044, 0.069, 0.078, 0.081, 0.091, 0.046, 0.087, 0.079, 0.083, 0.092,
];
const CLASSROOM_SIGMA: f64 = 60.0;

fn c9_threshold_ensemble() -> Outcome {
    let policy = EcaPolicy::default();
    let v = RoomGeometry::classroom1().volume_l();
    // sigma = 0 collapse
    let flat = threshold_ensemble(0.085, 430.0, 0.0, v, 18, &MitigationScenario::none(), &policy, 100, 1)
        .map_err(|e| e.to_string())?;
    let c_ss = 430.0 + 0.085e6 / 360.0;
    let collapse = flat.c_limit == flat.c_target && flat.c_ideal == flat.c_target && (flat.c_target - c_ss).abs() < 1e-9 * c_ss;

    let grid: Vec<f64> = (0..=10).map(|k| k as f64 * 100.0).collect();
    let mut pooled = Vec::new();
    for (g, &cadr) in grid.iter().enumerate() {
        let scenario = MitigationScenario::single("grid", cadr).unwrap();
        let mut acc = [0.0; 3];
        for (d, &e) in CLASSROOM1_E.iter().enumerate() {
            let n = estimate_occupancy(e, &policy).map_err(|e| e.to_string())?;
            let seed = derive_seed(9, (g * CLASSROOM1_E.len() + d) as u64);
            let t = threshold_ensemble(e, 430.0, CLASSROOM_SIGMA, v, n, &scenario, &policy, DEFAULT_ENSEMBLE_RUNS, seed)
                .map_err(|e| e.to_string())?;
            acc[0] += t.c_limit;
            acc[1] += t.c_target;
            acc[2] += t.c_ideal;
        }
        let k = CLASSROOM1_E.len() as f64;
        pooled.push((
            cadr,
            ThresholdTriple {
                c_limit: acc[0] / k,
                c_target: acc[1] / k,
                c_ideal: acc[2] / k,
                provenance: co2bayes_core::assessment::ThresholdProvenance::EmpiricalEquation,
            },
        ));
    }
    let target0 = pooled[0].1.c_target;
    let fit = fit_threshold_curve(&pooled, None).map_err(|e| e.to_string())?;
    let within = (target0 / 688.2 - 1.0).abs() <= 0.10;
    let slope_ok = (fit.c_target.slope - 0.7).abs() <= 0.2;
    check(
        collapse && within && slope_ok,
        format!(
            "sigma=0 collapse {collapse}; c_target(0) = {target0:.1} ppm ({:+.1}% vs 688.2); slope {:.3} up to {} cfm, plateau {:.1}",
            100.0 * (target0 / 688.2 - 1.0),
            fit.c_target.slope,
            fit.c_target.breakpoint,
            fit.c_target.plateau
        ),
    )
}

fn run_twice(dir: &Path, name: &str, args: &[&str]) -> Result<(), String> {
    let mut snaps = Vec::new();
    let out_dir = dir.join(name);
    for _ in 0..2 {
        let _ = std::fs::remove_dir_all(&out_dir);
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--out", p(&out_dir)]);
        let out = run(&full);
        if code(&out) != 0 {
            return Err(format!("{name} exited {}", code(&out)));
        }
        snaps.push((snapshot(&out_dir), stdout(&out)));
    }
    if snaps[0] != snaps[1] {
        return Err(format!("{name} outputs differ between runs"));
    }
    Ok(())
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let sim = d.join("sim");
    if code(&run(&["simulate", "test4", "--seed", "7", "--out", p(&sim)])) != 0 {
        return Err("simulate failed".into());
    }
    let csv = sim.join("test4.csv");
    let fit = d.join("fit");
    if code(&run(&["infer", "--data", p(&csv), "--seed", "7", "--out", p(&fit)])) != 0 {
        return Err("infer failed".into());
    }
    let posterior = fit.join("posterior.json");
    let week = common::classroom_week(d, 0.35, 0.044, 20.0, 3);
    let cfg = common::classroom_config(d, r#", "thresholds": {"n_runs": 200}"#);
    let params = r#"{"e_lps": 0.085, "c_out_ppm": 430, "sigma": 60}"#;
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("simulate", vec!["simulate", "test6", "--seed", "7"]),
        ("infer", vec!["infer", "--data", p(&csv), "--seed", "7"]),
        ("ppc", vec!["ppc", "--posterior", p(&posterior), "--data", p(&csv), "--seed", "7"]),
        ("assess", vec!["assess", "--data", p(&week), "--config", p(&cfg), "--seed", "7"]),
        ("thresholds_params", vec!["thresholds", "--params", params, "--config", p(&cfg), "--seed", "7"]),
        ("thresholds_posterior", vec!["thresholds", "--posterior", p(&posterior), "--config", p(&cfg), "--seed", "7"]),
    ];
    for (name, args) in &commands {
        run_twice(d, name, args)?;
    }
    Ok(format!("{} commands re-run with identical files and stdout", commands.len()))
}

fn c11_calibration() -> Outcome {
    let priors = PriorSet::default();
    let v = CHAMBER_V;
    let results: Vec<Result<(bool, bool), String>> = (0..50u64)
        .map(|i| {
            let mut rng = stream(11, Domain::Synthetic, i);
            let truth = priors.sample(&mut rng);
            let params = ModelParams::from_ach(truth.q_ach, v, truth.c_out_ppm, truth.e_lps, truth.sigma)
                .map_err(|e| e.to_string())?;
            let data = simulate_sde(truth.c_out_ppm, &params, v, 3.0, 20.0 / 3600.0, derive_seed(11, i))
                .map_err(|e| e.to_string())?;
            let s = sample_posterior(&priors, &data, v, &SamplerConfig::default(), derive_seed(12, i))
                .map_err(|e| e.to_string())?;
            let sum = summarize(&s, 0.95).map_err(|e| e.to_string())?;
            Ok((sum.q_ach.contains(truth.q_ach), s.converged()))
        })
        .collect();
    let mut covered = 0;
    let mut converged = 0;
    for r in results {
        let (c, k) = r?;
        covered += c as usize;
        converged += k as usize;
    }
    check(covered >= 40, format!("Q inside 95% HDI for {covered}/50 datasets ({converged}/50 converged)"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 11] = [
        ("ODE oracle", Duration::from_secs(1), c1_ode_oracle),
        ("SDE consistency", Duration::from_secs(30), c2_sde_consistency),
        ("decay recovery", Duration::from_secs(300), c3_decay_recovery),
        ("injection recovery", Duration::from_secs(600), c4_injection_recovery),
        ("prior sensitivity", Duration::from_secs(600), c5_prior_sensitivity),
        ("PPC calibration", Duration::from_secs(600), c6_ppc_calibration),
        ("ECAi arithmetic", Duration::from_secs(1), c7_ecai),
        ("threshold equations", Duration::from_secs(1), c8_threshold_equations),
        ("threshold ensemble", Duration::from_secs(120), c9_threshold_ensemble),
        ("determinism", Duration::from_secs(600), c10_determinism),
        ("calibration study", Duration::from_secs(1800), c11_calibration),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= *limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(d) => (false, d),
        };
        failed += !ok as usize;
        println!(
            "criterion {:>2} {:<20} {} [{:.2}s / {}s] {detail}",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} passed, {} failed", criteria.len() - failed, failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
