//! Seeded Monte Carlo experiments.
//!
//! An [`ExperimentSpec`] describes a single operating point, a 1-D sweep
//! over one parameter, or a 2-D `(D/K, L/K)` grid. Each trial draws its
//! basis, channels, source and noise from substreams keyed by
//! `(seed, label, trial)`, so:
//!
//! * every method in a trial sees identical data,
//! * adding or removing a method never changes another method's numbers,
//! * sweep points share their random draws (common random numbers),
//! * results do not depend on thread count or scheduling.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metrics::sin_angle;
use crate::models::{
    add_noise, db_to_eta, gen_channels_in_subspace, gen_gaussian_subspace, gen_pca_subspace, gen_source, sigma_for_snr,
    sigma_for_snr_measured, BasisKind, NormProfile, PulseFamily, SeededRng, SourceKind, SubspaceModel,
};
use crate::par::Execution;
use crate::sigops::Signal;
use crate::solvers::{cc_solve, ls_linearized_solve, oracle_ls_solve, sccc_solve, Estimate};
use crate::{CVector, Error, Result};

/// Floor applied before taking `log10` of an error in grid output.
pub const LOG_ERROR_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cc,
    Sccc,
    Oracle,
    Ls,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cc => "cc",
            Method::Sccc => "sccc",
            Method::Oracle => "oracle",
            Method::Ls => "ls",
        }
    }
}

/// Target SNR in dB, or no noise at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SnrRepr", into = "SnrRepr")]
pub enum Snr {
    Db(f64),
    Noiseless,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SnrRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<SnrRepr> for Snr {
    type Error = String;

    fn try_from(r: SnrRepr) -> std::result::Result<Self, String> {
        match r {
            SnrRepr::Number(v) if v.is_finite() => Ok(Snr::Db(v)),
            SnrRepr::Number(v) => Err(format!("snr-db must be finite, got {v}")),
            SnrRepr::Text(s) if s == "noiseless" => Ok(Snr::Noiseless),
            SnrRepr::Text(s) => Err(format!("snr-db must be a number or \"noiseless\", got {s:?}")),
        }
    }
}

impl From<Snr> for SnrRepr {
    fn from(s: Snr) -> Self {
        match s {
            Snr::Db(v) => SnrRepr::Number(v),
            Snr::Noiseless => SnrRepr::Text("noiseless".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    K,
    M,
    D,
    LOverK,
    SnrDb,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::K => "k",
            SweepParam::M => "m",
            SweepParam::D => "d",
            SweepParam::LOverK => "l_over_k",
            SweepParam::SnrDb => "snr_db",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Grid {
    pub d_over_k: Vec<f64>,
    pub l_over_k: Vec<f64>,
}

/// Declarative experiment description; the JSON form uses kebab-case keys
/// and every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub k: usize,
    pub m: usize,
    pub d: usize,
    pub l_over_k: f64,
    pub snr_db: Snr,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub basis: BasisKind,
    pub source: SourceKind,
    pub norm_profile: NormProfile,
    pub percentile: f64,
    pub seed: u64,
    pub sigma_x: f64,
    /// PCA training-set size; defaults to `50·D`.
    pub n_train: Option<usize>,
    pub pulse: PulseFamily,
    pub sweep: Option<Sweep>,
    pub grid: Option<Grid>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            k: 64,
            m: 4,
            d: 8,
            l_over_k: 20.0,
            snr_db: Snr::Db(20.0),
            trials: 200,
            methods: vec![Method::Cc, Method::Sccc],
            basis: BasisKind::Gaussian,
            source: SourceKind::Gaussian,
            norm_profile: NormProfile::Flat,
            percentile: 95.0,
            seed: 0,
            sigma_x: 1.0,
            n_train: None,
            pulse: PulseFamily::default(),
            sweep: None,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Point,
    Sweep,
    Grid,
}

/// One fully resolved operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub k: usize,
    pub m: usize,
    pub d: usize,
    pub l: usize,
    pub snr: Snr,
}

/// Where a summary row sits in the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PointLabel {
    Single,
    Sweep { parameter: SweepParam, value: f64 },
    Grid { d_over_k: f64, l_over_k: f64 },
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::config(format!("{what} values must be positive integers, got {v}")))
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("spec serializes");
        format!("{:x}", Sha256::digest(canonical.as_bytes()))
    }

    pub fn shape(&self) -> Shape {
        match (&self.sweep, &self.grid) {
            (Some(_), _) => Shape::Sweep,
            (None, Some(_)) => Shape::Grid,
            (None, None) => Shape::Point,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_some() && self.grid.is_some() {
            return Err(Error::config("a spec may have a sweep or a grid, not both"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("at least one method is required"));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::config("methods are listed more than once"));
        }
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return Err(Error::config(format!("percentile must be in (0, 100], got {}", self.percentile)));
        }
        if !(self.sigma_x > 0.0 && self.sigma_x.is_finite()) {
            return Err(Error::config("sigma-x must be positive"));
        }
        if self.basis == BasisKind::Custom {
            return Err(Error::config("experiments support the gaussian and pca bases only"));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::config("sweep needs at least one value"));
            }
        }
        if let Some(g) = &self.grid {
            if g.d_over_k.is_empty() || g.l_over_k.is_empty() {
                return Err(Error::config("grid axes must be nonempty"));
            }
        }
        for (label, p) in self.points()? {
            self.check_point(&p).map_err(|e| Error::config(format!("{label:?}: {e}")))?;
        }
        Ok(())
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        if p.m < 2 {
            return Err(Error::config(format!("need M >= 2, got {}", p.m)));
        }
        if p.d == 0 || p.d > p.k {
            return Err(Error::config(format!("need 1 <= D <= K, got D = {}, K = {}", p.d, p.k)));
        }
        if p.l < p.k {
            return Err(Error::config(format!("need L >= K, got L = {}, K = {}", p.l, p.k)));
        }
        if self.basis == BasisKind::Pca {
            let support = self.pulse.support(p.k);
            if support > p.k as f64 {
                return Err(Error::config(format!("pulse support {support:.2} exceeds K = {}", p.k)));
            }
        }
        Ok(())
    }

    fn base_point(&self) -> Point {
        Point { k: self.k, m: self.m, d: self.d, l: (self.l_over_k * self.k as f64).round() as usize, snr: self.snr_db }
    }

    /// Every operating point with its label, in output order.
    pub fn points(&self) -> Result<Vec<(PointLabel, Point)>> {
        let base = self.base_point();
        match (self.shape(), &self.sweep, &self.grid) {
            (Shape::Sweep, Some(s), _) => s
                .values
                .iter()
                .map(|&v| {
                    let mut p = base;
                    match s.parameter {
                        SweepParam::K => {
                            p.k = as_count(v, "k")?;
                            p.l = (self.l_over_k * p.k as f64).round() as usize;
                        }
                        SweepParam::M => p.m = as_count(v, "m")?,
                        SweepParam::D => p.d = as_count(v, "d")?,
                        SweepParam::LOverK => {
                            if !(v > 0.0) {
                                return Err(Error::config(format!("l-over-k must be positive, got {v}")));
                            }
                            p.l = (v * p.k as f64).round() as usize;
                        }
                        SweepParam::SnrDb => {
                            if !v.is_finite() {
                                return Err(Error::config("snr-db sweep values must be finite"));
                            }
                            p.snr = Snr::Db(v);
                        }
                    }
                    Ok((PointLabel::Sweep { parameter: s.parameter, value: v }, p))
                })
                .collect(),
            (Shape::Grid, _, Some(g)) => {
                let mut out = Vec::with_capacity(g.d_over_k.len() * g.l_over_k.len());
                for &dk in &g.d_over_k {
                    for &lk in &g.l_over_k {
                        if !(dk > 0.0 && lk > 0.0) {
                            return Err(Error::config("grid ratios must be positive"));
                        }
                        let p =
                            Point { d: ((dk * self.k as f64).round() as usize).max(1), l: (lk * self.k as f64).round() as usize, ..base };
                        out.push((PointLabel::Grid { d_over_k: dk, l_over_k: lk }, p));
                    }
                }
                Ok(out)
            }
            _ => Ok(vec![(PointLabel::Single, base)]),
        }
    }
}

/// Data for one trial at one operating point.
#[derive(Debug, Clone)]
pub struct TrialInstance {
    pub model: SubspaceModel,
    /// True coefficients, when the channels lie exactly in the subspace.
    pub u: Option<CVector>,
    /// Stacked true channels.
    pub truth: CVector,
    pub x: Signal,
    pub clean: Vec<Signal>,
    pub ys: Vec<Signal>,
    pub sigma2: f64,
}

/// Draws the instance for `trial` at `point`.
///
/// Gaussian bases draw `u` and set `σ²` from `η = K‖x‖²‖u‖²/(MLσ²)`.
/// PCA bases draw the channels directly from the pulse family, so they lie
/// near but not in the learned subspace; `σ²` then comes from the measured
/// clean output energy.
pub fn generate_instance(spec: &ExperimentSpec, point: &Point, trial: u64) -> Result<TrialInstance> {
    let seeds = SeededRng::new(spec.seed);
    let Point { k, m, d, l, snr } = *point;
    let x = gen_source(spec.source, l, spec.sigma_x, &mut seeds.stream("source", trial))?;
    let (model, u, channels) = match spec.basis {
        BasisKind::Pca => {
            let n_train = spec.n_train.unwrap_or(50 * d);
            let model = gen_pca_subspace(&spec.pulse, k, d, m, n_train, &mut seeds.stream("basis", trial))?;
            let channels = spec.pulse.sample_ensemble(k, m, &mut seeds.stream("channels", trial))?;
            (model, None, channels)
        }
        _ => {
            let model = gen_gaussian_subspace(k, d, m, &mut seeds.stream("basis", trial))?;
            let (u, channels) = gen_channels_in_subspace(&model, &mut seeds.stream("channels", trial), spec.norm_profile);
            (model, Some(u), channels)
        }
    };
    let clean = channels.convolve(&x)?;
    let sigma2 = match (snr, &u) {
        (Snr::Noiseless, _) => 0.0,
        (Snr::Db(db), Some(u)) => sigma_for_snr(db_to_eta(db), k, l, m, &x, u)?,
        (Snr::Db(db), None) => sigma_for_snr_measured(db_to_eta(db), &clean)?,
    };
    let mut noise = seeds.stream("noise", trial);
    let ys = clean.iter().map(|s| add_noise(s, sigma2.sqrt(), &mut noise)).collect::<Result<_>>()?;
    Ok(TrialInstance { model, u, truth: channels.stacked(), x, clean, ys, sigma2 })
}

/// One method's result on one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MethodOutcome {
    pub sin_angle: f64,
    /// Degenerate eigenvalues, or the solver failed outright (error recorded as 1).
    pub degenerate: bool,
}

fn run_method(method: Method, inst: &TrialInstance, k: usize) -> MethodOutcome {
    let est: Result<Estimate> = match method {
        Method::Cc => cc_solve(&inst.ys, k),
        Method::Sccc => sccc_solve(&inst.ys, &inst.model, inst.sigma2, k),
        Method::Oracle => oracle_ls_solve(&inst.ys, &inst.x, &inst.model),
        Method::Ls => ls_linearized_solve(&inst.ys, &inst.model),
    };
    match est.and_then(|e| Ok((sin_angle(&e.h_hat, &inst.truth)?, e.degenerate))) {
        Ok((err, degenerate)) => MethodOutcome { sin_angle: err, degenerate },
        Err(_) => MethodOutcome { sin_angle: 1.0, degenerate: true },
    }
}

/// Runs every method of `spec` on trial `trial` at `point`.
pub fn run_trial_at(spec: &ExperimentSpec, point: &Point, trial: u64) -> Result<BTreeMap<Method, MethodOutcome>> {
    let inst = generate_instance(spec, point, trial)?;
    Ok(spec.methods.iter().map(|&m| (m, run_method(m, &inst, point.k))).collect())
}

/// Runs trial `trial` at the spec's base operating point.
pub fn run_trial(spec: &ExperimentSpec, trial: u64) -> Result<BTreeMap<Method, MethodOutcome>> {
    run_trial_at(spec, &spec.base_point(), trial)
}

/// Nearest-rank percentile: the `⌈p/100·n⌉`-th smallest value.
pub fn aggregate_percentile(errors: &[f64], p: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::input("cannot take a percentile of an empty list"));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::input(format!("percentile must be in (0, 100], got {p}")));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((p * n as f64) / 100.0).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

pub fn median(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::input("cannot take the median of an empty list"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) })
}

/// Aggregate statistics for one (point, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Summary {
    pub label: PointLabel,
    pub method: Method,
    pub percentile_error: f64,
    pub median: f64,
    pub mean: f64,
    pub trials: usize,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrialRecord {
    pub point: usize,
    pub trial: u64,
    pub method: Method,
    pub sin_angle: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub spec_hash: String,
    pub seed: u64,
    pub summaries: Vec<Summary>,
    pub records: Vec<TrialRecord>,
}

impl ExperimentResult {
    pub fn summary(&self, label_index: usize, method: Method) -> Option<&Summary> {
        let per_point = self.spec.methods.len();
        self.summaries[label_index * per_point..(label_index + 1) * per_point].iter().find(|s| s.method == method)
    }
}

/// Runs whatever shape `spec` has.
pub fn run(spec: &ExperimentSpec, exec: Execution) -> Result<ExperimentResult> {
    spec.validate()?;
    let points = spec.points()?;
    let trials = spec.trials;
    let outcomes = exec.map_indexed(points.len() * trials, |job| {
        let (p, t) = (job / trials, job % trials);
        run_trial_at(spec, &points[p].1, t as u64)
    });
    let mut records = Vec::with_capacity(outcomes.len() * spec.methods.len());
    for (job, outcome) in outcomes.into_iter().enumerate() {
        let (p, t) = (job / trials, job % trials);
        for (method, o) in outcome? {
            records.push(TrialRecord { point: p, trial: t as u64, method, sin_angle: o.sin_angle, degenerate: o.degenerate });
        }
    }
    let mut summaries = Vec::with_capacity(points.len() * spec.methods.len());
    for (p, (label, _)) in points.iter().enumerate() {
        for &method in &spec.methods {
            let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.point == p && r.method == method).collect();
            let errors: Vec<f64> = rows.iter().map(|r| r.sin_angle).collect();
            summaries.push(Summary {
                label: *label,
                method,
                percentile_error: aggregate_percentile(&errors, spec.percentile)?,
                median: median(&errors)?,
                mean: errors.iter().sum::<f64>() / errors.len() as f64,
                trials: errors.len(),
                degenerate: rows.iter().filter(|r| r.degenerate).count(),
            });
        }
    }
    Ok(ExperimentResult { spec: spec.clone(), spec_hash: spec.hash(), seed: spec.seed, summaries, records })
}

fn require_shape(spec: &ExperimentSpec, shape: Shape) -> Result<()> {
    if spec.shape() != shape {
        return Err(Error::config(format!("spec has shape {:?}, expected {shape:?}", spec.shape())));
    }
    Ok(())
}

/// Single operating point: `trials` trials at the base parameters.
pub fn run_point(spec: &ExperimentSpec, exec: Execution) -> Result<ExperimentResult> {
    require_shape(spec, Shape::Point)?;
    run(spec, exec)
}

/// 1-D sweep; one summary per (value, method).
pub fn run_sweep(spec: &ExperimentSpec, exec: Execution) -> Result<ExperimentResult> {
    require_shape(spec, Shape::Sweep)?;
    run(spec, exec)
}

/// 2-D `(D/K, L/K)` grid; one summary per (cell, method).
pub fn run_phase_grid(spec: &ExperimentSpec, exec: Execution) -> Result<ExperimentResult> {
    require_shape(spec, Shape::Grid)?;
    run(spec, exec)
}

/// `sweep_param,value,method,p95,median,mean,trials,degenerate`.
///
/// The `p95` column holds the spec's configured percentile.
pub fn write_summary_csv<W: Write>(result: &ExperimentResult, mut w: W) -> Result<()> {
    writeln!(w, "sweep_param,value,method,p95,median,mean,trials,degenerate")?;
    for s in &result.summaries {
        let (param, value) = match s.label {
            PointLabel::Single => ("none".to_string(), String::new()),
            PointLabel::Sweep { parameter, value } => (parameter.name().to_string(), value.to_string()),
            PointLabel::Grid { d_over_k, l_over_k } => ("grid".to_string(), format!("{d_over_k}:{l_over_k}")),
        };
        writeln!(w, "{param},{value},{},{},{},{},{},{}", s.method.name(), s.percentile_error, s.median, s.mean, s.trials, s.degenerate)?;
    }
    Ok(())
}

/// `d_over_k,l_over_k,method,log10_p95`; errors are floored at [`LOG_ERROR_FLOOR`].
pub fn write_grid_csv<W: Write>(result: &ExperimentResult, mut w: W) -> Result<()> {
    writeln!(w, "d_over_k,l_over_k,method,log10_p95")?;
    for s in &result.summaries {
        let PointLabel::Grid { d_over_k, l_over_k } = s.label else {
            return Err(Error::config("grid output needs a grid experiment"));
        };
        writeln!(w, "{d_over_k},{l_over_k},{},{}", s.method.name(), s.percentile_error.max(LOG_ERROR_FLOOR).log10())?;
    }
    Ok(())
}

/// `point,trial,method,sin_angle,degenerate`, one line per (point, trial, method);
/// `point` indexes the summary order.
pub fn write_trials_csv<W: Write>(result: &ExperimentResult, mut w: W) -> Result<()> {
    writeln!(w, "point,trial,method,sin_angle,degenerate")?;
    for r in &result.records {
        writeln!(w, "{},{},{},{},{}", r.point, r.trial, r.method.name(), r.sin_angle, r.degenerate)?;
    }
    Ok(())
}

/// Pretty JSON with the spec embedded, newline-terminated.
pub fn write_json<W: Write>(result: &ExperimentResult, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, result)?;
    writeln!(w)?;
    Ok(())
}
