//! Monte Carlo trends and paired comparisons at desk scale.

use blindchan::harness::{median, run, run_trial, ExperimentSpec, Grid, Method, PointLabel, Snr, Summary, Sweep, SweepParam};
use blindchan::metrics::{rho_cross, snr_eta, SnrMode};
use blindchan::models::{
    complex_gaussian_vec, gen_channels_in_subspace, gen_gaussian_subspace, gen_source, NormProfile, SeededRng, SourceKind,
};
use blindchan::par::Execution;
use blindchan::sigops::Signal;

fn sweep(parameter: SweepParam, values: &[f64], methods: Vec<Method>) -> ExperimentSpec {
    ExperimentSpec {
        k: 32,
        m: 4,
        d: 8,
        snr_db: Snr::Db(20.0),
        trials: 200,
        methods,
        seed: 31,
        sweep: Some(Sweep { parameter, values: values.to_vec() }),
        ..Default::default()
    }
}

fn series(spec: &ExperimentSpec, method: Method, pick: fn(&Summary) -> f64) -> Vec<f64> {
    let result = run(spec, Execution::Parallel).unwrap();
    let n = spec.sweep.as_ref().unwrap().values.len();
    (0..n).map(|i| pick(result.summary(i, method).unwrap())).collect()
}

#[test]
fn sccc_beats_cc_on_most_paired_trials() {
    let spec = ExperimentSpec { k: 32, m: 4, d: 8, snr_db: Snr::Db(20.0), trials: 200, seed: 32, ..Default::default() };
    let wins = (0..200)
        .filter(|&t| {
            let r = run_trial(&spec, t).unwrap();
            r[&Method::Sccc].sin_angle < r[&Method::Cc].sin_angle
        })
        .count();
    assert!(wins >= 160, "sccc better on {wins}/200");
}

#[test]
fn sccc_median_below_cc_at_headline_point() {
    let spec = ExperimentSpec { trials: 40, seed: 33, ..Default::default() };
    let result = run(&spec, Execution::Parallel).unwrap();
    let errors = |m: Method| result.records.iter().filter(|r| r.method == m).map(|r| r.sin_angle).collect::<Vec<_>>();
    assert!(median(&errors(Method::Sccc)).unwrap() < median(&errors(Method::Cc)).unwrap());
}

#[test]
fn sccc_percentile_trends() {
    let by_l = series(&sweep(SweepParam::LOverK, &[5.0, 10.0, 20.0, 40.0], vec![Method::Sccc]), Method::Sccc, |s| s.percentile_error);
    assert!(by_l.windows(2).all(|w| w[1] < w[0]), "{by_l:?}");
    let by_d = series(&sweep(SweepParam::D, &[4.0, 8.0, 16.0, 32.0], vec![Method::Sccc]), Method::Sccc, |s| s.percentile_error);
    assert!(by_d.windows(2).all(|w| w[1] > w[0]), "{by_d:?}");
    let by_m = series(&sweep(SweepParam::M, &[2.0, 4.0, 6.0], vec![Method::Sccc]), Method::Sccc, |s| s.percentile_error);
    assert!(by_m.windows(2).all(|w| w[1] < w[0]), "{by_m:?}");
}

#[test]
fn oracle_error_decreases_with_length() {
    let by_l = series(&sweep(SweepParam::LOverK, &[5.0, 10.0, 20.0], vec![Method::Oracle]), Method::Oracle, |s| s.median);
    assert!(by_l.windows(2).all(|w| w[1] < w[0]), "{by_l:?}");
}

#[test]
fn oracle_has_no_dimension_wall() {
    let spec = ExperimentSpec {
        k: 16,
        m: 4,
        snr_db: Snr::Db(20.0),
        trials: 40,
        methods: vec![Method::Oracle],
        seed: 34,
        grid: Some(Grid { d_over_k: vec![0.25, 0.5, 1.0], l_over_k: vec![1.0, 5.0, 20.0] }),
        ..Default::default()
    };
    let result = run(&spec, Execution::Parallel).unwrap();
    for s in &result.summaries {
        let PointLabel::Grid { d_over_k, l_over_k } = s.label else { unreachable!() };
        assert!(s.percentile_error < 0.5, "oracle at D/K={d_over_k}, L/K={l_over_k}: {}", s.percentile_error);
    }
}

#[test]
fn sccc_degrades_with_dimension_faster_than_oracle() {
    let spec = ExperimentSpec {
        k: 32,
        m: 2,
        snr_db: Snr::Db(20.0),
        trials: 40,
        methods: vec![Method::Sccc, Method::Oracle],
        seed: 34,
        grid: Some(Grid { d_over_k: vec![0.25, 0.5, 0.8, 1.0], l_over_k: vec![5.0] }),
        ..Default::default()
    };
    let result = run(&spec, Execution::Parallel).unwrap();
    let ratios: Vec<f64> = (0..4)
        .map(|i| result.summary(i, Method::Sccc).unwrap().percentile_error / result.summary(i, Method::Oracle).unwrap().percentile_error)
        .collect();
    assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
    assert!(ratios[3] >= 4.0, "{ratios:?}");
}

#[test]
fn empirical_snr_matches_formula() {
    let (k, m, d, l) = (8, 3, 4, 32);
    let s = SeededRng::new(35);
    let model = gen_gaussian_subspace(k, d, m, &mut s.stream("basis", 0)).unwrap();
    let (u, _) = gen_channels_in_subspace(&model, &mut s.stream("channels", 0), NormProfile::Flat);
    let x = gen_source(SourceKind::Gaussian, l, 1.0, &mut s.stream("source", 0)).unwrap();
    let formula = snr_eta(k, l, m, &x, &u, 0.3, SnrMode::Formula).unwrap();
    let empirical = snr_eta(k, l, m, &x, &u, 0.3, SnrMode::Empirical { draws: 2000, seed: 36 }).unwrap();
    assert!((empirical / formula - 1.0).abs() <= 0.03, "formula {formula}, empirical {empirical}");
}

#[test]
fn rho_cross_grows_like_root_l() {
    let k = 8;
    let mut log_l = Vec::new();
    let mut log_med = Vec::new();
    for (i, l) in [64usize, 256, 1024].into_iter().enumerate() {
        let s = SeededRng::new(37);
        let mut values: Vec<f64> = (0..50)
            .map(|t| {
                let mut rng = s.stream("rho", (i * 1000 + t) as u64);
                let x = Signal::new(complex_gaussian_vec(&mut rng, l, 1.0)).unwrap();
                let w = Signal::new(complex_gaussian_vec(&mut rng, l, 1.0)).unwrap();
                rho_cross(&x, &[w], k).unwrap()
            })
            .collect();
        values.sort_by(f64::total_cmp);
        log_l.push((l as f64).ln());
        log_med.push(median(&values).unwrap().ln());
    }
    let n = log_l.len() as f64;
    let (ml, mm) = (log_l.iter().sum::<f64>() / n, log_med.iter().sum::<f64>() / n);
    let slope =
        log_l.iter().zip(&log_med).map(|(a, b)| (a - ml) * (b - mm)).sum::<f64>() / log_l.iter().map(|a| (a - ml).powi(2)).sum::<f64>();
    assert!((0.3..=0.7).contains(&slope), "slope {slope}");
}
