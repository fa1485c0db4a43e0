use volint::evaluation::{relative_loss, score, trimmed_mean, MeasureKind};
use volint::harness::report::write_study;
use volint::harness::{
    out_sample_origins, rolling_forecasts, run_simulation_study, simulate_series, EstimatorId, ModelChoice,
    SeriesData, StudyConfig,
};

fn small_cir() -> StudyConfig {
    let mut cfg = StudyConfig::cir_weekly();
    cfg.series_len = 500;
    cfg.in_sample_len = 400;
    cfg.n_reps = 6;
    cfg
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|v| v.to_bits()).collect()
}

#[test]
fn future_data_never_changes_past_forecasts() {
    let cfg = small_cir();
    let data = simulate_series(&cfg, 0).unwrap();
    let origins = out_sample_origins(&cfg, data.returns.len());
    let base = rolling_forecasts(&data, &cfg, origins.clone()).unwrap();
    for j in [origins.start, origins.start + 17, origins.end - 1] {
        let mut levels = data.levels.clone();
        let mut returns = data.returns.clone();
        returns[j] *= 5.0;
        for v in levels[j + 1..].iter_mut() {
            *v *= 1.3;
        }
        let moved = SeriesData::new(levels, returns, None).unwrap();
        let out = rolling_forecasts(&moved, &cfg, origins.clone()).unwrap();
        let last = j - origins.start;
        for (a, b) in base.tracks.iter().zip(&out.tracks) {
            assert_eq!(bits(&a.sigma2[..=last]), bits(&b.sigma2[..=last]), "{} at {j}", a.estimator_id);
        }
    }
}

#[test]
fn state_fit_ignores_most_recent_window() {
    let cfg = small_cir();
    let n = cfg.es.n;
    let data = simulate_series(&cfg, 1).unwrap();
    let origins = out_sample_origins(&cfg, data.returns.len());
    let base = rolling_forecasts(&data, &cfg, origins.clone()).unwrap();
    for k in [0usize, 5, 40] {
        let t = origins.start + k;
        let mut returns = data.returns.clone();
        for y in returns[t - n..t].iter_mut() {
            *y *= 4.0;
        }
        let moved = SeriesData::new(data.levels.clone(), returns, None).unwrap();
        let out = rolling_forecasts(&moved, &cfg, origins.clone()).unwrap();
        let a = base.components[k].unwrap().state.map(f64::to_bits);
        let b = out.components[k].unwrap().state.map(f64::to_bits);
        assert_eq!(a, b, "state estimate at step {k} saw the last {n} returns");
        // the smoother does see them
        assert_ne!(base.components[k].unwrap().es, out.components[k].unwrap().es);
    }
}

#[test]
fn integ_lies_between_its_components() {
    let cfg = small_cir();
    for rep in 0..3 {
        let data = simulate_series(&cfg, rep).unwrap();
        let origins = out_sample_origins(&cfg, data.returns.len());
        let out = rolling_forecasts(&data, &cfg, origins).unwrap();
        let integ = out.track(EstimatorId::Integ).unwrap();
        for (k, c) in out.components.iter().enumerate() {
            let c = c.unwrap();
            let v = integ.sigma2[k];
            match c.state {
                Some(s) => {
                    let (lo, hi) = (c.es.min(s), c.es.max(s));
                    assert!(v >= lo && v <= hi, "step {k}: {v} outside [{lo}, {hi}]");
                }
                None => assert_eq!(v, c.es),
            }
        }
    }
}

#[test]
fn single_step_out_sample() {
    let mut cfg = small_cir();
    cfg.estimators = vec![EstimatorId::RiskM];
    let data = simulate_series(&cfg, 0).unwrap();
    let t = 300;
    let out = rolling_forecasts(&data, &cfg, t..t + 1).unwrap();
    let es = volint::time_domain::exp_smooth(&data.returns, t, &cfg.es).unwrap();
    assert_eq!(out.tracks[0].sigma2, vec![es]);
}

#[test]
fn identical_estimators_tie_everywhere() {
    let mut cfg = small_cir();
    cfg.n_reps = 1;
    cfg.estimators = vec![EstimatorId::RiskM, EstimatorId::SemiProxy, EstimatorId::Hist];
    cfg.semi_grid = vec![cfg.es.lambda];
    cfg.es = volint::time_domain::EsConfig::new(1.0, 52).unwrap();
    cfg.semi_grid = vec![1.0];
    let out = run_simulation_study(&cfg).unwrap();
    let first = &out.reps[0].measures;
    for kind in [MeasureKind::Imade, MeasureKind::Made, MeasureKind::Rade] {
        let v = first.get(kind).unwrap();
        assert!(v.iter().all(|x| x.to_bits() == v[0].to_bits()), "{kind:?} {v:?}");
        for e in &out.report.estimators {
            assert_eq!(e.get(kind).unwrap().score, Some(0.0));
        }
    }
}

#[test]
fn report_is_recomputable_from_per_rep_dump() {
    let mut cfg = small_cir();
    cfg.model = ModelChoice::Gbm;
    cfg.gbm = volint::sde_models::GbmParams::new(0.03, 0.26).unwrap();
    cfg.trim_upper = 0.2;
    cfg.n_reps = 10;
    let out = run_simulation_study(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_study(dir.path(), &out).unwrap();

    let mut rdr = csv::Reader::from_path(dir.path().join("per_rep.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let ids = out.estimator_ids();
    let mut made = vec![vec![0.0; ids.len()]; cfg.n_reps];
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let rep: usize = rec[0].parse().unwrap();
        let e = ids.iter().position(|i| i == &rec[1]).unwrap();
        made[rep][e] = rec[col("made")].parse().unwrap();
    }
    let scores = score(&made).unwrap();
    let means: Vec<f64> = (0..ids.len())
        .map(|e| trimmed_mean(&made.iter().map(|r| r[e]).collect::<Vec<_>>(), cfg.trim_upper).unwrap())
        .collect();
    let losses = relative_loss(&means, cfg.reference_index()).unwrap();
    for (e, id) in ids.iter().enumerate() {
        let s = out.report.estimator(id).unwrap().made;
        assert_eq!(s.mean.to_bits(), means[e].to_bits());
        assert_eq!(s.score, Some(scores[e]));
        assert_eq!(s.rel_loss.map(f64::to_bits), Some(losses[e].to_bits()));
    }

    let curve = std::fs::read_to_string(dir.path().join("fig2_curve.csv")).unwrap();
    assert!(curve.starts_with("step,Hist,RiskM,SemiProxy,NonBay,Integ\n"));
    assert_eq!(curve.lines().count(), 1 + cfg.out_sample_len());
}

#[test]
fn external_model_is_rejected_by_study() {
    let mut cfg = small_cir();
    cfg.model = ModelChoice::ExternalCsv;
    assert!(run_simulation_study(&cfg).is_err());
}
