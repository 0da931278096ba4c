//! Named invariant suites.
//!
//! The fast level covers oracle equivalences and exact inequalities; the
//! full level adds Monte Carlo checks of the expectation identities that
//! the debiased estimator relies on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{min_phase_distance, sin_angle};
use crate::models::{
    add_noise, complex_gaussian_vec, gen_channels_in_subspace, gen_gaussian_subspace, gen_source, NormProfile, SeededRng, SourceKind,
};
use crate::sigops::{circular_convolve, circular_xcorr, Signal};
use crate::solvers::{cc_solve, sccc_solve};
use crate::spectral::{davis_kahan_check, symmetrize};
use crate::xcorr::{apply_cross_corr, build_cross_corr_fast, build_explicit_y, CrossCorrMatrix};
use crate::{CMatrix, CVector, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckLevel {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passed)
    }

    fn record(&mut self, name: &str, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.results.push(CheckResult { name: name.to_string(), passed, detail });
    }
}

/// Builds `YᴴY` from channel outputs; the fast path is one implementation.
pub type CrossCorrBuilder = dyn Fn(&[Signal], usize) -> Result<CrossCorrMatrix>;

fn random_outputs(seed: u64, m: usize, l: usize) -> Result<Vec<Signal>> {
    let mut rng = SeededRng::new(seed).stream("check-outputs", 0);
    (0..m).map(|_| Signal::new(complex_gaussian_vec(&mut rng, l, 1.0))).collect()
}

/// Largest relative Frobenius error of `build` against `(Y)ᴴ(Y)` over 20
/// random instances with `M = 3, K = 8, L = 32`.
pub fn oracle_equivalence(build: &CrossCorrBuilder) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let ys = random_outputs(seed, 3, 32)?;
        let y = build_explicit_y(&ys, 8)?;
        let reference = y.adjoint() * &y;
        let fast = build(&ys, 8)?;
        worst = worst.max((fast.dense() - &reference).norm() / reference.norm());
    }
    Ok(worst)
}

fn check_oracle(build: &CrossCorrBuilder) -> Result<(bool, String)> {
    let err = oracle_equivalence(build)?;
    Ok((err <= 1e-10, format!("max relative Frobenius error {err:.3e} (tol 1e-10)")))
}

fn check_matrix_free() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let ys = random_outputs(100 + seed, 4, 40)?;
        let a = build_cross_corr_fast(&ys, 6)?;
        let v = CVector::from_vec(complex_gaussian_vec(&mut SeededRng::new(seed).stream("check-v", 0), 24, 1.0));
        let dense = a.dense() * &v;
        worst = worst.max((apply_cross_corr(&ys, 6, &v)? - &dense).norm() / dense.norm());
    }
    Ok((worst <= 1e-10, format!("max relative error {worst:.3e} (tol 1e-10)")))
}

fn check_convolution() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for l in 1..=40 {
        let a = random_outputs(200 + l as u64, 2, l)?;
        let fast = circular_convolve(&a[0], &a[1])?;
        for (i, z) in fast.values().iter().enumerate() {
            let naive: C64 = (0..l).map(|j| a[0].values()[j] * a[1].values()[(i + l - j) % l]).sum();
            worst = worst.max((z - naive).norm() / (a[0].norm() * a[1].norm()));
        }
    }
    Ok((worst <= 1e-12, format!("max relative error vs direct sum {worst:.3e} (tol 1e-12)")))
}

fn check_noiseless_recovery() -> Result<(bool, String)> {
    let (mut cc_worst, mut sccc_worst): (f64, f64) = (0.0, 0.0);
    for seed in 0..10 {
        let s = SeededRng::new(300 + seed);
        let model = gen_gaussian_subspace(16, 4, 4, &mut s.stream("basis", 0))?;
        let (_, ch) = gen_channels_in_subspace(&model, &mut s.stream("channels", 0), NormProfile::Flat);
        let x = gen_source(SourceKind::Gaussian, 48, 1.0, &mut s.stream("source", 0))?;
        let ys = ch.convolve(&x)?;
        let truth = ch.stacked();
        cc_worst = cc_worst.max(sin_angle(&cc_solve(&ys, 16)?.h_hat, &truth)?);
        sccc_worst = sccc_worst.max(sin_angle(&sccc_solve(&ys, &model, 0.0, 16)?.h_hat, &truth)?);
    }
    Ok((cc_worst <= 1e-6 && sccc_worst <= 1e-8, format!("worst sin-angle cc {cc_worst:.3e} (tol 1e-6), sccc {sccc_worst:.3e} (tol 1e-8)")))
}

fn check_angle_inequality() -> Result<(bool, String)> {
    let mut rng = SeededRng::new(400).stream("check-angles", 0);
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..12);
        let a = CVector::from_vec(complex_gaussian_vec(&mut rng, n, 1.0));
        let b = CVector::from_vec(complex_gaussian_vec(&mut rng, n, 1.0));
        let a = &a / C64::new(a.norm(), 0.0);
        let b = &b / C64::new(b.norm(), 0.0);
        let s = sin_angle(&a, &b)?;
        let d = min_phase_distance(&a, &b)?;
        if !(s <= d && d <= 2f64.sqrt() * s + 1e-12) {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{violations} violations in 1000 pairs")))
}

/// Random Hermitian pair `(A, E)` with `‖E‖ = ratio·gap`.
pub fn davis_kahan_pair<R: Rng + ?Sized>(n: usize, ratio: f64, rng: &mut R) -> (CMatrix, CMatrix) {
    let g = CMatrix::from_vec(n, n, complex_gaussian_vec(rng, n * n, 1.0));
    let q = g.qr().q();
    let gap = 0.1 + rng.gen::<f64>();
    let mut values = vec![0.0];
    values.extend((1..n).map(|_| gap + 5.0 * rng.gen::<f64>()));
    let d = CMatrix::from_diagonal(&CVector::from_iterator(n, values.iter().map(|&v| C64::new(v, 0.0))));
    let a = &q * d * q.adjoint();
    let e = symmetrize(&CMatrix::from_vec(n, n, complex_gaussian_vec(rng, n * n, 1.0)));
    let lambda_gap = values[1..].iter().copied().fold(f64::INFINITY, f64::min);
    let scale = ratio * lambda_gap / crate::spectral::spectral_norm(&e);
    (symmetrize(&a), e * C64::new(scale, 0.0))
}

fn check_davis_kahan() -> Result<(bool, String)> {
    let mut rng = SeededRng::new(500).stream("check-dk", 0);
    let (mut checked, mut violations) = (0, 0);
    while checked < 200 {
        let n = rng.gen_range(3..10);
        let ratio = 0.2 * rng.gen::<f64>();
        let (a, e) = davis_kahan_pair(n, ratio, &mut rng);
        let report = davis_kahan_check(&a, &e)?;
        if !report.premise_holds {
            continue;
        }
        checked += 1;
        if report.lhs > report.rhs {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{violations} violations in {checked} premise-satisfying pairs")))
}

/// Relative Frobenius error of the Monte Carlo mean of `Y_nᴴY_n` (noise
/// only) against `σ²(M−1)L·I`.
pub fn debias_identity_error(m: usize, k: usize, l: usize, sigma2: f64, draws: usize, seed: u64) -> Result<f64> {
    let seeds = SeededRng::new(seed);
    let zero = Signal::zeros(l)?;
    let mut mean = CMatrix::zeros(m * k, m * k);
    for i in 0..draws as u64 {
        let mut rng = seeds.stream("noise", i);
        let ws: Vec<Signal> = (0..m).map(|_| add_noise(&zero, sigma2.sqrt(), &mut rng)).collect::<Result<_>>()?;
        mean += build_cross_corr_fast(&ws, k)?.dense();
    }
    mean /= C64::new(draws as f64, 0.0);
    let target = CMatrix::identity(m * k, m * k) * C64::new(sigma2 * (m - 1) as f64 * l as f64, 0.0);
    Ok((mean - &target).norm() / target.norm())
}

fn padded_basis<R: Rng + ?Sized>(k: usize, d: usize, l: usize, rng: &mut R) -> Vec<Signal> {
    let entries = complex_gaussian_vec(rng, k * d, 1.0);
    (0..d)
        .map(|j| {
            let mut col = vec![C64::new(0.0, 0.0); l];
            col[..k].copy_from_slice(&entries[j * k..(j + 1) * k]);
            Signal::new(col).expect("finite")
        })
        .collect()
}

fn combine(cols: &[Signal], u: &CVector) -> Signal {
    let l = cols[0].len();
    let mut out = vec![C64::new(0.0, 0.0); l];
    for (c, &w) in cols.iter().zip(u.iter()) {
        for (o, v) in out.iter_mut().zip(c.values()) {
            *o += w * v;
        }
    }
    Signal::new(out).expect("finite")
}

/// Monte Carlo errors for the three expectation identities of a zero-padded
/// Gaussian basis `Φ̃ = S*Φ` (`K×D` block, `L` samples), returned as
/// relative Frobenius errors `[B.1, B.2, B.3 (m≠m′), B.3 (m=m′)]`.
pub fn expectation_lemma_errors(k: usize, l: usize, d: usize, draws: usize, seed: u64) -> Result<[f64; 4]> {
    let seeds = SeededRng::new(seed);
    let u = CVector::from_vec(complex_gaussian_vec(&mut seeds.stream("lemma-u", 0), d, 1.0));
    let x = gen_source(SourceKind::Gaussian, l, 1.0, &mut seeds.stream("lemma-x", 0))?;
    let un = u.norm_squared();
    let xn = x.norm_sqr();

    let mut auto = vec![C64::new(0.0, 0.0); l];
    let mut cross = CMatrix::zeros(l, d);
    let mut distinct = CMatrix::zeros(d, d);
    let mut same = CMatrix::zeros(d, d);
    for i in 0..draws as u64 {
        let mut rng = seeds.stream("lemma-basis", i);
        let phi = padded_basis(k, d, l, &mut rng);
        let other = padded_basis(k, d, l, &mut rng);
        let g = combine(&phi, &u);
        // C_gᴴC_g is circulant with first column corr(g, g)
        for (a, b) in auto.iter_mut().zip(circular_xcorr(&g, &g)?) {
            *a += b;
        }
        for (j, col) in phi.iter().enumerate() {
            for (r, v) in circular_xcorr(&g, col)?.into_iter().enumerate() {
                cross[(r, j)] += v;
            }
        }
        // Φ̃ᴴ C_gᴴ C_xᴴ C_x C_g Φ̃ is the Gram matrix of x ⊛ g ⊛ φ̃_j
        let xg = circular_convolve(&x, &combine(&other, &u))?;
        let z: Vec<Signal> = phi.iter().map(|c| circular_convolve(&xg, c)).collect::<Result<_>>()?;
        let xg_same = circular_convolve(&x, &g)?;
        let z_same: Vec<Signal> = phi.iter().map(|c| circular_convolve(&xg_same, c)).collect::<Result<_>>()?;
        for a in 0..d {
            for b in 0..d {
                distinct[(a, b)] += z[a].to_vector().dotc(&z[b].to_vector());
                same[(a, b)] += z_same[a].to_vector().dotc(&z_same[b].to_vector());
            }
        }
    }
    let n = C64::new(draws as f64, 0.0);
    let kf = k as f64;

    // circulant Frobenius norm is √L times its first column's norm
    let mut b1_err = 0.0;
    for (i, a) in auto.iter().enumerate() {
        let target = if i == 0 { kf * un } else { 0.0 };
        b1_err += (a / n - C64::new(target, 0.0)).norm_sqr();
    }
    let b1 = b1_err.sqrt() / (kf * un);

    let b2_target = {
        let mut t = CMatrix::zeros(l, d);
        for j in 0..d {
            t[(0, j)] = u[j].conj() * kf;
        }
        t
    };
    let b2 = (cross / n - &b2_target).norm() / b2_target.norm();

    let eye = CMatrix::identity(d, d);
    let t3 = &eye * C64::new(kf * kf * xn * un, 0.0);
    let b3_distinct = (distinct / n - &t3).norm() / t3.norm();
    let t4 = (&eye * C64::new(un, 0.0) + &u * u.adjoint()) * C64::new(kf * kf * xn, 0.0);
    let b3_same = (same / n - &t4).norm() / t4.norm();
    Ok([b1, b2, b3_distinct, b3_same])
}

/// Runs the suite at `level` with the library's fast `YᴴY` builder.
pub fn run_checks(level: CheckLevel) -> CheckReport {
    run_checks_with(level, &|ys: &[Signal], k: usize| build_cross_corr_fast(ys, k))
}

/// Same as [`run_checks`] with a caller-supplied `YᴴY` builder under test.
pub fn run_checks_with(level: CheckLevel, build: &CrossCorrBuilder) -> CheckReport {
    let mut report = CheckReport::default();
    report.record("xcorr.fast-matches-explicit", check_oracle(build));
    report.record("xcorr.matrix-free-matches-dense", check_matrix_free());
    report.record("sigops.fft-convolution-matches-direct-sum", check_convolution());
    report.record("solvers.noiseless-exact-recovery", check_noiseless_recovery());
    report.record("metrics.angle-inequality", check_angle_inequality());
    report.record("spectral.davis-kahan", check_davis_kahan());
    report.record(
        "xcorr.debias-identity",
        debias_identity_error(3, 8, 32, 0.5, 2000, 600).map(|e| (e <= 0.05, format!("relative error {e:.4} (tol 0.05)"))),
    );
    if level == CheckLevel::Full {
        match expectation_lemma_errors(8, 32, 3, 2000, 700) {
            Ok(errs) => {
                let names = ["models.lemma-b1", "models.lemma-b2", "models.lemma-b3-distinct", "models.lemma-b3-same"];
                for (name, e) in names.iter().zip(errs) {
                    report.record(name, Ok((e <= 0.05, format!("relative error {e:.4} (tol 0.05)"))));
                }
            }
            Err(e) => report.record("models.expectation-lemmas", Err(e)),
        }
    }
    report
}
