//! Scalar diagnostics: angles, SNR, flatness and restricted correlation norms.

use serde::{Deserialize, Serialize};

use crate::models::{add_noise, gen_gaussian_subspace, ChannelEnsemble, SeededRng};
use crate::sigops::{circular_xcorr, RestrictionKind, RestrictionOp, Signal};
use crate::spectral::{eigenvalues_hermitian, spectral_norm};
use crate::{CMatrix, CVector, Error, Result, C64};

fn unit(v: &CVector, what: &str) -> Result<CVector> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::input(format!("{what} must be a finite nonzero vector")));
    }
    Ok(v / C64::new(n, 0.0))
}

/// `sin∠(a, b) = √(1 − |⟨a,b⟩|²/(‖a‖²‖b‖²))`, clamped to `[0, 1]`.
///
/// Evaluated as the norm of the residual of projecting `b̂` on `â`, which
/// keeps full relative accuracy for nearly parallel vectors.
pub fn sin_angle(a: &CVector, b: &CVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("vector lengths {} and {} differ", a.len(), b.len())));
    }
    let (a, b) = (unit(a, "first argument")?, unit(b, "second argument")?);
    let resid = &b - &a * a.dotc(&b);
    Ok(resid.norm().clamp(0.0, 1.0))
}

/// `min_θ ‖q − e^{iθ} q̃‖₂`, attained at `θ = arg⟨q̃, q⟩`.
pub fn min_phase_distance(q: &CVector, q_tilde: &CVector) -> Result<f64> {
    if q.len() != q_tilde.len() {
        return Err(Error::dim(format!("vector lengths {} and {} differ", q.len(), q_tilde.len())));
    }
    let ip = q_tilde.dotc(q);
    let phase = if ip.norm() > 0.0 { ip / ip.norm() } else { C64::new(1.0, 0.0) };
    Ok((q - q_tilde * phase).norm())
}

/// `μ = max_m √M‖u_m‖₂/‖u‖₂`.
pub fn flatness_mu(u: &CVector, m: usize, d: usize) -> Result<f64> {
    if m == 0 || d == 0 || u.len() != m * d {
        return Err(Error::dim(format!("coefficient length {} != M·D = {}", u.len(), m * d)));
    }
    let total = u.norm();
    if !(total > 0.0) {
        return Err(Error::input("coefficient vector is zero"));
    }
    let peak = (0..m).map(|c| u.rows(c * d, d).norm()).fold(0.0, f64::max);
    Ok((m as f64).sqrt() * peak / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnrMode {
    /// `K‖x‖²‖u‖²/(MLσ²)`.
    Formula,
    /// Ratio of Monte Carlo means of `Σ‖h_m ⊛ x‖²` over fresh Gaussian
    /// bases and of `Σ‖w_m‖²` over fresh noise.
    Empirical { draws: usize, seed: u64 },
}

/// SNR `η`. Returns `f64::INFINITY` when `σ² = 0`.
pub fn snr_eta(k: usize, l: usize, m: usize, x: &Signal, u: &CVector, sigma2: f64, mode: SnrMode) -> Result<f64> {
    if !(sigma2 >= 0.0) {
        return Err(Error::config(format!("noise variance must be >= 0, got {sigma2}")));
    }
    if m == 0 || !u.len().is_multiple_of(m) || x.len() != l || k == 0 || k > l {
        return Err(Error::dim("inconsistent K, L, M, x or u"));
    }
    if sigma2 == 0.0 {
        return Ok(f64::INFINITY);
    }
    match mode {
        SnrMode::Formula => Ok(k as f64 * x.norm_sqr() * u.norm_squared() / (m as f64 * l as f64 * sigma2)),
        SnrMode::Empirical { draws, seed } => {
            if draws == 0 {
                return Err(Error::config("empirical SNR needs at least one draw"));
            }
            let d = u.len() / m;
            let seeds = SeededRng::new(seed);
            let zero = Signal::zeros(l)?;
            let (mut signal, mut noise) = (0.0, 0.0);
            for i in 0..draws as u64 {
                let model = gen_gaussian_subspace(k, d, m, &mut seeds.stream("snr-basis", i))?;
                let ch = ChannelEnsemble::from_stacked(&model.apply(u)?, m)?;
                signal += ch.convolve(x)?.iter().map(Signal::norm_sqr).sum::<f64>();
                let mut rng = seeds.stream("snr-noise", i);
                for _ in 0..m {
                    noise += add_noise(&zero, sigma2.sqrt(), &mut rng)?.norm_sqr();
                }
            }
            Ok(signal / noise)
        }
    }
}

/// `10·log10(η)`.
pub fn eta_to_db(eta: f64) -> f64 {
    10.0 * eta.log10()
}

fn triple(k: usize, l: usize) -> Result<RestrictionOp> {
    if k == 0 || 3 * k - 2 > l {
        return Err(Error::config(format!("need 3K - 2 <= L, got K = {k}, L = {l}")));
    }
    RestrictionOp::new(RestrictionKind::Triple, k, l)
}

/// `S̃ C_aᴴ C_b S̃ᴴ`; `C_aᴴC_b` is circulant with first column `corr(a, b)`.
fn restricted_corr(r: &RestrictionOp, a: &Signal, b: &Signal) -> Result<CMatrix> {
    r.restrict_circulant(&circular_xcorr(a, b)?)
}

/// `ρ_x = ‖S̃ C_xᴴ C_x S̃ᴴ‖`.
pub fn rho_x(x: &Signal, k: usize) -> Result<f64> {
    let r = triple(k, x.len())?;
    let auto = restricted_corr(&r, x, x)?;
    Ok(eigenvalues_hermitian(&auto)?.into_iter().map(f64::abs).fold(0.0, f64::max))
}

/// `ρ_{x,w} = max_m ‖S̃ C_xᴴ C_{w_m} S̃ᴴ‖`.
pub fn rho_cross(x: &Signal, ws: &[Signal], k: usize) -> Result<f64> {
    let r = triple(k, x.len())?;
    let mut best: f64 = 0.0;
    for w in ws {
        best = best.max(spectral_norm(&restricted_corr(&r, x, w)?));
    }
    Ok(best)
}

/// `(ρ_w, ρ̄_w)`: the largest and the channel-averaged deviation of the
/// `K`-restricted noise correlations from their expectation `σ²L·I`
/// (diagonal pairs) or `0` (distinct channels).
pub fn rho_noise(ws: &[Signal], k: usize, sigma2: f64) -> Result<(f64, f64)> {
    let Some(first) = ws.first() else {
        return Err(Error::input("no noise realizations"));
    };
    let l = first.len();
    if ws.iter().any(|w| w.len() != l) {
        return Err(Error::dim("noise realizations differ in length"));
    }
    let r = RestrictionOp::new(RestrictionKind::Head, k, l)?;
    let expect = CMatrix::identity(k, k) * C64::new(sigma2 * l as f64, 0.0);
    let mut rho_w: f64 = 0.0;
    let mut mean_dev = CMatrix::zeros(k, k);
    for (i, a) in ws.iter().enumerate() {
        for (j, b) in ws.iter().enumerate() {
            let mut dev = restricted_corr(&r, a, b)?;
            if i == j {
                dev -= &expect;
                mean_dev += &dev;
            }
            rho_w = rho_w.max(spectral_norm(&dev));
        }
    }
    mean_dev /= C64::new(ws.len() as f64, 0.0);
    Ok((rho_w, spectral_norm(&mean_dev)))
}

/// Every diagnostic for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sin_angle: f64,
    pub eta: f64,
    pub mu: f64,
    pub rho_x: f64,
    pub rho_xw: f64,
    pub rho_w: f64,
    pub rho_bar_w: f64,
    pub gap_ratio: f64,
}

/// Inputs of [`MetricReport::compute`].
pub struct Instance<'a> {
    pub x: &'a Signal,
    pub noise: &'a [Signal],
    pub u: &'a CVector,
    pub truth: &'a CVector,
    pub estimate: &'a CVector,
    pub k: usize,
    pub sigma2: f64,
    pub gap_ratio: f64,
}

impl MetricReport {
    pub fn compute(inst: &Instance<'_>) -> Result<Self> {
        let m = inst.noise.len();
        if m == 0 || !inst.u.len().is_multiple_of(m) {
            return Err(Error::dim("coefficient length is not a multiple of M"));
        }
        let l = inst.x.len();
        let (rho_w, rho_bar_w) = rho_noise(inst.noise, inst.k, inst.sigma2)?;
        Ok(MetricReport {
            sin_angle: sin_angle(inst.estimate, inst.truth)?,
            eta: snr_eta(inst.k, l, m, inst.x, inst.u, inst.sigma2, SnrMode::Formula)?,
            mu: flatness_mu(inst.u, m, inst.u.len() / m)?,
            rho_x: rho_x(inst.x, inst.k)?,
            rho_xw: rho_cross(inst.x, inst.noise, inst.k)?,
            rho_w,
            rho_bar_w,
            gap_ratio: inst.gap_ratio,
        })
    }
}
