use std::path::Path;

use anyhow::{Context, Result};
use co2bayes_core::assessment::{assess_day, season_summaries, write_threshold_csv, DayInput, ThresholdCurveFit};
use co2bayes_core::ingest::{parse_dir, parse_file, wall_time, SensorData};
use co2bayes_core::inference::Diagnostics;
use co2bayes_core::rng::derive_seed;
use co2bayes_core::{
    estimate_occupancy, fit_threshold_curve, posterior_predictive, presets, sample_posterior, school_hours_cdf,
    segment_occupied, summarize, threshold_empirical, threshold_ensemble, AssessmentReport, Co2Series,
    MitigationScenario, Param, PosteriorSamples, PosteriorSummary, PpcResult, Season, ThresholdTriple,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::{Manifest, OutDir};
use crate::{Common, InputError, EXIT_NOT_CONVERGED, EXIT_OK};

fn setup(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_series(path: &Path, cfg: &RunConfig) -> Result<SensorData> {
    if !path.is_file() {
        return Err(InputError(format!("data file {} does not exist", path.display())).into());
    }
    let d = parse_file(path, &cfg.ingest.parse).with_context(|| format!("reading {}", path.display()))?;
    for w in &d.metadata.warnings {
        log::warn!("{w}");
    }
    Ok(d)
}

pub fn simulate(common: &Common, scenario: &str) -> Result<u8> {
    let cfg = setup(common)?;
    let preset = presets::get(scenario)?;
    let series = preset.simulate(cfg.seed)?;
    if series.values().iter().any(|&c| c < 0.0) {
        log::warn!("simulated trace went below zero; values are written as simulated");
    }
    let manifest = Manifest::new("simulate", vec![scenario.to_string()], &cfg)?;
    let out = OutDir::create(&common.out)?;
    #[derive(Serialize)]
    struct Body<'a> {
        scenario: &'a presets::Preset,
        volume_l: f64,
        n_samples: usize,
    }
    let body = Body {
        scenario: &preset,
        volume_l: preset.volume_l(),
        n_samples: series.len(),
    };
    let path = out.write_csv(&format!("{scenario}.csv"), &manifest, &body, series.to_csv_string().as_bytes())?;
    println!("{}: {} samples -> {}", preset.description, series.len(), path.display());
    Ok(EXIT_OK)
}

#[derive(Serialize, Deserialize)]
struct PosteriorFile {
    volume_l: f64,
    samples: PosteriorSamples,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    summary: &'a PosteriorSummary,
    diagnostics: &'a Diagnostics,
}

fn print_summary(s: &PosteriorSummary, samples: &PosteriorSamples) {
    let pct = (s.hdi_mass * 100.0).round();
    println!(
        "{:<10} {:>12} {:>12} {:>12} {:>12} {:>7} {:>8}",
        "param",
        "mean",
        "sd",
        format!("hdi{pct}_lo"),
        format!("hdi{pct}_hi"),
        "r_hat",
        "ess"
    );
    for p in Param::ALL {
        let x = s.get(p);
        let d = samples.param_diagnostics(p);
        println!(
            "{:<10} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>7.3} {:>8.0}",
            p.column(),
            x.mean,
            x.sd,
            x.hdi_low,
            x.hdi_high,
            d.r_hat,
            d.effective_sample_size
        );
    }
}

fn warn_not_converged(samples: &PosteriorSamples) {
    let worst = Param::ALL
        .into_iter()
        .map(|p| samples.param_diagnostics(p).r_hat)
        .fold(f64::NAN, f64::max);
    eprintln!("==================================================================");
    eprintln!("WARNING: chains did not converge (max r_hat = {worst:.3} > 1.05).");
    eprintln!("Do not use these estimates; increase draws or revisit the priors.");
    eprintln!("==================================================================");
}

pub fn infer(common: &Common, data: &Path) -> Result<u8> {
    let cfg = setup(common)?;
    let sensor = load_series(data, &cfg)?;
    let mut manifest = Manifest::new("infer", vec![format!("--data={}", data.display())], &cfg)?;
    manifest.add_input(data)?;
    let volume_l = cfg.geometry.volume_l();
    let samples = sample_posterior(&cfg.priors, &sensor.series, volume_l, &cfg.sampler, cfg.seed)?;
    let summary = summarize(&samples, cfg.hdi_mass)?;

    let out = OutDir::create(&common.out)?;
    out.write_json(
        "summary.json",
        &manifest,
        &SummaryFile {
            summary: &summary,
            diagnostics: &samples.diagnostics,
        },
    )?;
    out.write_json("posterior.json", &manifest, &PosteriorFile { volume_l, samples: samples.clone() })?;
    print_summary(&summary, &samples);
    println!("divergences: {}", samples.diagnostics.divergences);
    if samples.converged() {
        Ok(EXIT_OK)
    } else {
        warn_not_converged(&samples);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn load_posterior(path: &Path) -> Result<PosteriorFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| InputError(format!("cannot read posterior {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| InputError(format!("invalid posterior file {}: {e}", path.display())).into())
}

fn interpret_p(p: f64) -> &'static str {
    if !(0.05..=0.95).contains(&p) {
        "poor fit: observed statistic is extreme under the model"
    } else if (0.2..=0.8).contains(&p) {
        "good fit: close to 0.5"
    } else {
        "marginal fit"
    }
}

pub fn ppc(common: &Common, posterior: &Path, data: &Path) -> Result<u8> {
    let cfg = setup(common)?;
    let post = load_posterior(posterior)?;
    let sensor = load_series(data, &cfg)?;
    let mut manifest = Manifest::new(
        "ppc",
        vec![format!("--posterior={}", posterior.display()), format!("--data={}", data.display())],
        &cfg,
    )?;
    manifest.add_input(posterior)?;
    manifest.add_input(data)?;
    let result: PpcResult = posterior_predictive(
        &post.samples,
        &sensor.series,
        post.volume_l,
        cfg.ppc.n_sims,
        cfg.ppc.statistic,
        cfg.seed,
    )?;
    let out = OutDir::create(&common.out)?;
    let mut csv = Vec::new();
    result.envelope.write_csv(&mut csv)?;
    out.write_csv("envelope.csv", &manifest, &serde_json::json!({}), &csv)?;
    out.write_json("ppc.json", &manifest, &result)?;
    println!(
        "bayesian_p = {:.3} ({} sims, statistic {:?}): {}",
        result.bayesian_p,
        result.n_sims,
        result.test_statistic,
        interpret_p(result.bayesian_p)
    );
    Ok(EXIT_OK)
}

/// All CSVs under a path merged into one series; later duplicates of a
/// timestamp are dropped.
fn load_all(path: &Path, cfg: &RunConfig) -> Result<Co2Series> {
    let files = if path.is_dir() {
        parse_dir(path, &cfg.ingest.parse).map_err(|e| InputError(format!("{}: {e}", path.display())))?
    } else if path.is_file() {
        vec![(path.to_path_buf(), load_series(path, cfg)?)]
    } else {
        return Err(InputError(format!("data path {} does not exist", path.display())).into());
    };
    let mut pairs: Vec<(f64, f64)> = files.iter().flat_map(|(_, d)| d.series.iter()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let before = pairs.len();
    pairs.dedup_by(|b, a| a.0 == b.0);
    if pairs.len() < before {
        log::warn!("dropped {} samples with timestamps repeated across files", before - pairs.len());
    }
    Ok(Co2Series::from_pairs(&pairs)?)
}

#[derive(Serialize)]
struct SegmentRecord {
    day: String,
    start_time: String,
    end_time: String,
    n_samples: usize,
    converged: bool,
}

#[derive(Serialize)]
struct AssessFile<'a> {
    report: &'a AssessmentReport,
    segments: Vec<SegmentRecord>,
}

fn time_label(t: f64) -> String {
    wall_time(t).map_or_else(|| format!("{t}"), |d| d.format("%Y-%m-%dT%H:%M:%S").to_string())
}

pub fn assess(common: &Common, data: &Path) -> Result<u8> {
    let cfg = setup(common)?;
    let series = load_all(data, &cfg)?;
    let mut manifest = Manifest::new("assess", vec![format!("--data={}", data.display())], &cfg)?;
    manifest.add_input(data)?;
    let volume_l = cfg.geometry.volume_l();
    let seasons = &cfg.ingest.hours.seasons;
    let segments: Vec<_> = segment_occupied(&series, &cfg.ingest.segment)?
        .into_iter()
        .filter(|s| seasons.is_empty() || Season::of(s.day).is_some_and(|x| seasons.contains(&x)))
        .collect();
    if segments.is_empty() {
        return Err(InputError(format!(
            "no occupied segments found; check ingest.segment.school_start ({:?}), rise_threshold_ppm_per_h ({}) \
             and the season filter",
            cfg.ingest.segment.school_start, cfg.ingest.segment.rise_threshold_ppm_per_h
        ))
        .into());
    }

    let mut days = Vec::new();
    let mut records = Vec::new();
    let mut all_converged = true;
    for (i, seg) in segments.iter().enumerate() {
        let window = seg.extract(&series)?;
        let samples = sample_posterior(&cfg.priors, &window, volume_l, &cfg.sampler, derive_seed(cfg.seed, 2 * i as u64))
            .with_context(|| format!("segment {}", seg.day))?;
        let summary = summarize(&samples, cfg.hdi_mass)?;
        let converged = samples.converged();
        all_converged &= converged;
        let input = DayInput {
            day: seg.day.to_string(),
            season: Season::of(seg.day),
            summary: &summary,
            observed_peak_ppm: Some(window.values().iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            converged,
        };
        days.push(assess_day(
            &input,
            volume_l,
            &cfg.policy,
            &cfg.scenarios,
            cfg.thresholds.n_runs,
            derive_seed(cfg.seed, 2 * i as u64 + 1),
        )?);
        records.push(SegmentRecord {
            day: seg.day.to_string(),
            start_time: time_label(window.times_s()[0]),
            end_time: time_label(*window.times_s().last().expect("nonempty segment")),
            n_samples: seg.n_samples(),
            converged,
        });
    }
    let report = AssessmentReport {
        volume_l,
        policy: cfg.policy,
        seasons: season_summaries(&days),
        days,
    };

    let out = OutDir::create(&common.out)?;
    out.write_json(
        "assessment.json",
        &manifest,
        &AssessFile {
            report: &report,
            segments: records,
        },
    )?;
    match school_hours_cdf(&series, &cfg.ingest.hours, cfg.ingest.cdf_threshold_ppm) {
        Ok(cdf) => {
            let mut csv = Vec::new();
            cdf.write_csv(&mut csv)?;
            out.write_csv("cdf.csv", &manifest, &serde_json::json!({}), &csv)?;
        }
        Err(e) => log::warn!("school-hours CDF skipped: {e}"),
    }

    let header: Vec<String> = cfg.scenarios.iter().map(|s| format!("{:>10}", trunc(&s.name, 10))).collect();
    println!(
        "{:<10} {:<7} {:>6} {:>7} {:>4} {:>7} {:>9} {:>8} {}",
        "day",
        "season",
        "q_ach",
        "e_lps",
        "occ",
        "ecai",
        "c_target",
        "peak",
        header.join(" ")
    );
    for d in &report.days {
        let season = d.season.map_or("-".to_string(), |s| format!("{s:?}").to_lowercase());
        let ecai = d.ecai_provided.map_or("-".into(), |e| format!("{e:.1}"));
        let target = d.thresholds.map_or("-".into(), |t| format!("{:.0}", t.c_target));
        let peak = d.observed_peak_ppm.map_or("-".into(), |p| format!("{p:.0}"));
        let scen: Vec<String> = cfg
            .scenarios
            .iter()
            .map(|s| {
                d.scenarios
                    .iter()
                    .find(|r| r.name == s.name)
                    .map_or(format!("{:>10}", "-"), |r| format!("{:>10.1}", r.ecai))
            })
            .collect();
        println!(
            "{:<10} {:<7} {:>6.3} {:>7.4} {:>4} {:>7} {:>9} {:>8} {}",
            d.day,
            season,
            d.q_ach,
            d.e_lps,
            d.occupancy,
            ecai,
            target,
            peak,
            scen.join(" ")
        );
    }
    if all_converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("WARNING: at least one day's posterior did not converge; see assessment.json");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn trunc(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdParams {
    e_lps: f64,
    c_out_ppm: f64,
    sigma: f64,
    occupancy: Option<u32>,
}

fn parse_params(arg: &str) -> Result<ThresholdParams> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| InputError(format!("cannot read params {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| InputError(format!("invalid params: {e}")).into())
}

pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || InputError(format!("invalid CADR grid '{spec}'; use 0,200,400 or start:stop:step"));
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = if parts.len() == 3 {
        let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        let (start, stop, step) = (v[0], v[1], v[2]);
        if !(step > 0.0 && stop >= start) {
            return Err(bad().into());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| start + k as f64 * step).collect()
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad())?
    };
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(bad().into());
    }
    Ok(grid)
}

#[derive(Serialize)]
struct ComparisonRow {
    cadr_cfm: f64,
    ensemble: ThresholdTriple,
    empirical: ThresholdTriple,
}

#[derive(Serialize)]
struct ThresholdFile {
    volume_l: f64,
    occupancy: u32,
    e_lps: f64,
    c_out_ppm: f64,
    sigma: f64,
    n_runs: usize,
    fit: ThresholdCurveFit,
    comparison: Vec<ComparisonRow>,
}

pub fn thresholds(common: &Common, posterior: Option<&Path>, params: Option<&str>, grid: Option<&str>) -> Result<u8> {
    let cfg = setup(common)?;
    let grid = match grid {
        Some(g) => parse_grid(g)?,
        None => cfg.thresholds.cadr_grid.clone(),
    };
    let mut args = Vec::new();
    let (p, volume_l, mut manifest_inputs) = match (posterior, params) {
        (Some(path), _) => {
            let post = load_posterior(path)?;
            let m = summarize(&post.samples, cfg.hdi_mass)?.means();
            args.push(format!("--posterior={}", path.display()));
            let p = ThresholdParams {
                e_lps: m.e_lps,
                c_out_ppm: m.c_out_ppm,
                sigma: m.sigma,
                occupancy: None,
            };
            (p, post.volume_l, vec![path.to_path_buf()])
        }
        (None, Some(arg)) => {
            args.push(format!("--params={arg}"));
            (parse_params(arg)?, cfg.geometry.volume_l(), Vec::new())
        }
        (None, None) => return Err(InputError("one of --posterior or --params is required".into()).into()),
    };
    args.push(format!("--cadr-grid={}", grid.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")));
    let mut manifest = Manifest::new("thresholds", args, &cfg)?;
    for path in manifest_inputs.drain(..) {
        manifest.add_input(&path)?;
    }
    let occupancy = match p.occupancy {
        Some(n) => n,
        None => estimate_occupancy(p.e_lps, &cfg.policy)?,
    };
    if occupancy == 0 {
        return Err(InputError(format!("emission {} L/s implies no occupants; pass an occupancy", p.e_lps)).into());
    }

    let mut rows = Vec::with_capacity(grid.len());
    for (k, &cadr) in grid.iter().enumerate() {
        let scenario = MitigationScenario::single(format!("cadr_{cadr}"), cadr)?;
        let t = threshold_ensemble(
            p.e_lps,
            p.c_out_ppm,
            p.sigma,
            volume_l,
            occupancy,
            &scenario,
            &cfg.policy,
            cfg.thresholds.n_runs,
            derive_seed(cfg.seed, k as u64),
        )?;
        rows.push((cadr, t));
    }
    let fit = fit_threshold_curve(&rows, cfg.thresholds.breakpoint_cfm)?;
    let comparison = rows
        .iter()
        .map(|&(cadr, ensemble)| {
            Ok(ComparisonRow {
                cadr_cfm: cadr,
                ensemble,
                empirical: threshold_empirical(cadr)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let out = OutDir::create(&common.out)?;
    let mut csv = Vec::new();
    write_threshold_csv(&rows, &mut csv)?;
    out.write_csv("thresholds.csv", &manifest, &serde_json::json!({}), &csv)?;
    out.write_json(
        "threshold_fit.json",
        &manifest,
        &ThresholdFile {
            volume_l,
            occupancy,
            e_lps: p.e_lps,
            c_out_ppm: p.c_out_ppm,
            sigma: p.sigma,
            n_runs: cfg.thresholds.n_runs,
            fit,
            comparison,
        },
    )?;
    println!(
        "{:>8} {:>9} {:>9} {:>9} {:>11}",
        "cadr_cfm", "c_limit", "c_target", "c_ideal", "eq_c_target"
    );
    for (cadr, t) in &rows {
        println!(
            "{:>8.0} {:>9.1} {:>9.1} {:>9.1} {:>11.1}",
            cadr,
            t.c_limit,
            t.c_target,
            t.c_ideal,
            threshold_empirical(*cadr)?.c_target
        );
    }
    println!(
        "c_target fit: slope {:.3} up to {} cfm, plateau {:.1}",
        fit.c_target.slope, fit.c_target.breakpoint, fit.c_target.plateau
    );
    Ok(EXIT_OK)
}
