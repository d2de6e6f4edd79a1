use co2bayes_core::inference::convergence::ess_bulk;
use co2bayes_core::inference::{EmStats, PosteriorTarget};
use co2bayes_core::rng::{stream, Domain};
use co2bayes_core::{
    decay_reference_ach, log_likelihood_em, log_posterior, log_prior, presets, sample_posterior, summarize, Co2Series,
    Error, Param, ParamDraw, PriorSet, PriorSpec, SamplerConfig,
};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Uniform};

const V: f64 = 19_320.0;

fn quick() -> SamplerConfig {
    SamplerConfig {
        draws: 1000,
        ..SamplerConfig::default()
    }
}

#[test]
fn sufficient_statistics_match_direct_sum() {
    let data = presets::get("test4").unwrap().simulate(3).unwrap();
    let stats = EmStats::new(&data, V).unwrap();
    let mut rng = stream(1, Domain::Synthetic, 0);
    for _ in 0..20 {
        let d = ParamDraw::new(
            rng.random_range(0.2..3.0),
            rng.random_range(350.0..550.0),
            rng.random_range(0.0..0.05),
            rng.random_range(10.0..300.0),
        );
        let direct = log_likelihood_em(&d, &data, V).unwrap();
        let fast = stats.log_likelihood(&d);
        assert!((direct - fast).abs() < 1e-7 * direct.abs().max(1.0), "{direct} vs {fast}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let data = presets::get("test6").unwrap().simulate(8).unwrap();
    let target = PosteriorTarget::new(&PriorSet::default(), &data, V).unwrap();
    let mut rng = stream(2, Domain::Synthetic, 0);
    for _ in 0..20 {
        let x = [
            rng.random_range(0.5..2.5),
            rng.random_range(380.0..500.0),
            rng.random_range(0.005..0.04),
            rng.random_range(40.0..300.0),
        ];
        let (_, grad) = target.log_posterior_grad(&ParamDraw::from_array(x));
        for k in 0..4 {
            let h = 1e-6 * x[k].abs().max(1e-3);
            let mut up = x;
            let mut dn = x;
            up[k] += h;
            dn[k] -= h;
            let f = |v: [f64; 4]| log_posterior(&ParamDraw::from_array(v), &PriorSet::default(), &data, V).unwrap();
            let fd = (f(up) - f(dn)) / (2.0 * h);
            let scale = fd.abs().max(grad[k].abs()).max(1.0);
            assert!((fd - grad[k]).abs() / scale < 1e-6, "param {k}: fd {fd} vs analytic {}", grad[k]);
        }
    }
}

#[test]
fn prior_outside_support_is_neg_infinity() {
    let priors = PriorSet::default();
    assert_eq!(log_prior(&ParamDraw::new(3.5, 420.0, 0.01, 50.0), &priors), f64::NEG_INFINITY);
    assert_eq!(log_prior(&ParamDraw::new(1.0, 420.0, 0.01, -1.0), &priors), f64::NEG_INFINITY);
    assert!(log_prior(&ParamDraw::new(1.0, 420.0, 0.01, 50.0), &priors).is_finite());
}

#[test]
fn uninformative_data_returns_the_prior() {
    // starting at c_out with no emission, the drift is zero for every Q
    let data = Co2Series::new(vec![0.0, 20.0], vec![420.0, 425.0]).unwrap();
    let priors = PriorSet {
        q: PriorSpec::uniform(0.0, 3.0),
        c_out: PriorSpec::fixed(420.0),
        e: PriorSpec::fixed(0.0),
        sigma: PriorSpec::fixed(50.0),
    };
    let samples = sample_posterior(&priors, &data, V, &SamplerConfig::default(), 17).unwrap();
    let mut q = samples.pooled(Param::Q);
    let n_eff = ess_bulk(&samples.traces(Param::Q)).min(q.len() as f64);
    q.sort_by(f64::total_cmp);
    let u = Uniform::new(0.0, 3.0).unwrap();
    let n = q.len() as f64;
    let d = q
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = u.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value at the effective sample size
    let crit = 1.63 / n_eff.sqrt();
    assert!(d < crit, "KS D = {d}, critical {crit} (n_eff {n_eff})");
    assert!(samples.pooled(Param::Sigma).iter().all(|&s| s == 50.0));
}

#[test]
fn degenerate_series_is_rejected() {
    let data = Co2Series::new((0..50).map(|i| i as f64 * 20.0).collect(), vec![420.0; 50]).unwrap();
    let d = ParamDraw::new(1.0, 420.0, 0.0, 0.0);
    assert!(matches!(log_likelihood_em(&d, &data, V), Err(Error::DegenerateData)));
    // with a free sigma, the constant series still samples
    let priors = PriorSet::default().with(Param::E, PriorSpec::fixed(0.0));
    let s = sample_posterior(&priors, &data, V, &quick(), 1).unwrap();
    assert!(s.pooled(Param::Sigma).iter().all(|&x| x > 0.0 && x.is_finite()));
}

#[test]
fn all_fixed_priors_skip_sampling() {
    let data = presets::get("test4").unwrap().simulate(1).unwrap();
    let priors = PriorSet {
        q: PriorSpec::fixed(1.9),
        c_out: PriorSpec::fixed(420.0),
        e: PriorSpec::fixed(0.013),
        sigma: PriorSpec::fixed(72.7),
    };
    let s = sample_posterior(&priors, &data, V, &quick(), 1).unwrap();
    assert!(s.converged());
    assert!(s.pooled(Param::Q).iter().all(|&q| q == 1.9));
}

#[test]
fn unreachable_posterior_reported() {
    let data = presets::get("test4").unwrap().simulate(1).unwrap();
    // sigma pinned to zero makes every finite draw impossible
    let priors = PriorSet::default().with(Param::Sigma, PriorSpec::fixed(0.0));
    let err = sample_posterior(&priors, &data, V, &quick(), 1).unwrap_err();
    assert!(matches!(err, Error::PosteriorUnreachable { .. }), "{err}");
}

#[test]
fn sampler_is_seed_deterministic() {
    let data = presets::get("test4").unwrap().simulate(5).unwrap();
    let priors = PriorSet::default();
    let a = sample_posterior(&priors, &data, V, &quick(), 99).unwrap();
    let b = sample_posterior(&priors, &data, V, &quick(), 99).unwrap();
    assert_eq!(a.chains, b.chains);
    let c = sample_posterior(&priors, &data, V, &quick(), 100).unwrap();
    assert_ne!(a.chains, c.chains);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn sampler_config_validation() {
    let data = presets::get("test4").unwrap().simulate(5).unwrap();
    let bad = SamplerConfig {
        draws: 10,
        ..SamplerConfig::default()
    };
    assert!(sample_posterior(&PriorSet::default(), &data, V, &bad, 1).is_err());
    let one_chain = SamplerConfig {
        chains: 1,
        ..SamplerConfig::default()
    };
    assert!(sample_posterior(&PriorSet::default(), &data, V, &one_chain, 1).is_err());
    assert!(serde_json::from_str::<SamplerConfig>(r#"{"draws": 2000, "thin": 2}"#).is_err());
}

#[test]
fn injection_twin_recovers_parameters() {
    let preset = presets::get("test4").unwrap();
    let data = preset.simulate(11).unwrap();
    let samples = sample_posterior(&PriorSet::default(), &data, V, &SamplerConfig::default(), 11).unwrap();
    assert!(samples.converged());
    let s = summarize(&samples, 0.95).unwrap();
    assert!(s.q_ach.contains(1.9), "{:?}", s.q_ach);
    assert!(s.e_lps.contains(0.013), "{:?}", s.e_lps);
    assert!(s.q_ach.hdi_low < s.q_ach.mean && s.q_ach.mean < s.q_ach.hdi_high);
    for p in [Param::Q, Param::E, Param::Sigma] {
        let d = samples.param_diagnostics(p);
        assert!(d.r_hat < 1.05 && d.effective_sample_size > 400.0, "{p}: {d:?}");
    }
}

#[test]
fn informative_prior_narrows_the_posterior() {
    let data = presets::get("test4").unwrap().simulate(2).unwrap();
    let vague = sample_posterior(&PriorSet::default(), &data, V, &SamplerConfig::default(), 3).unwrap();
    let informative = PriorSet::default().with(Param::Q, PriorSpec::normal(1.9, 0.05));
    let tight = sample_posterior(&informative, &data, V, &SamplerConfig::default(), 3).unwrap();
    let sd = |s| summarize(s, 0.95).unwrap().q_ach.sd;
    assert!(sd(&tight) < sd(&vague));
}

#[test]
fn decay_fit_on_noise_free_data_is_exact() {
    let p = presets::get("test2").unwrap();
    let params = p.params().unwrap().with_sigma(0.0).unwrap();
    let t: Vec<f64> = (0..100).map(|i| i as f64 * 60.0).collect();
    let c: Vec<f64> = t
        .iter()
        .map(|&s| co2bayes_core::closed_form_ode(2000.0, &params, V, s / 3600.0).unwrap())
        .collect();
    let fit = decay_reference_ach(&Co2Series::new(t, c).unwrap(), 420.0).unwrap();
    assert!((fit.ach - 1.51).abs() < 1e-9);
    assert!(fit.std_error < 1e-9);
    assert!(!fit.non_decaying);
}

#[test]
fn decay_fit_recovers_noisy_rate() {
    // first hour only, where the excess stays well above the noise
    let data = presets::get("test1").unwrap().simulate(21).unwrap();
    let first_hour = data.slice(0, 181).unwrap();
    let fit = decay_reference_ach(&first_hour, 420.0).unwrap();
    assert!((fit.ach - 1.9).abs() < 3.0 * fit.std_error + 0.05, "{fit:?}");
}

#[test]
fn decay_fit_rejects_values_at_outdoor_level() {
    let data = Co2Series::new(vec![0.0, 60.0, 120.0], vec![900.0, 600.0, 420.0]).unwrap();
    assert!(decay_reference_ach(&data, 420.0).is_err());
    let rising = Co2Series::new(vec![0.0, 60.0, 120.0], vec![500.0, 600.0, 700.0]).unwrap();
    let fit = decay_reference_ach(&rising, 420.0).unwrap();
    assert!(fit.non_decaying && fit.rate().is_none());
}
