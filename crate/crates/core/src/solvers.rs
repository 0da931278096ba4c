//! Channel estimators.
//!
//! All estimators return a unit-norm, phase-canonical stacked estimate
//! `ĥ ∈ ℂ^{MK}`; the global complex scale of blind estimates is not
//! identifiable, so this is the only meaningful normalization.
//!
//! * [`cc_solve`]: smallest eigenvector of `YᴴY`.
//! * [`sccc_solve`]: smallest eigenvector of `Φᴴ(YᴴY − σ²(M−1)L·I)Φ`, mapped through `Φ`.
//! * [`oracle_ls_solve`]: non-blind least squares with the source known.
//! * [`ls_linearized_solve`]: a homogeneous least-squares baseline in the
//!   frequency domain. Its unknowns are the inverse source spectrum and `u`.
//!   This is a reconstruction of a published linearization, not a
//!   derivation from first principles; see the function docs.

use crate::models::SubspaceModel;
use crate::sigops::{fft, t_matrix, Signal};
use crate::spectral::{canonicalize_phase, smallest_eigvec, EigenStrategy};
use crate::xcorr::{build_cross_corr_fast, validate, CrossCorrOperator};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Output of every estimator.
#[derive(Debug, Clone)]
pub struct Estimate {
    /// Unit-norm stacked channel estimate.
    pub h_hat: CVector,
    /// Subspace coefficients, when the estimator works in the subspace.
    pub u_hat: Option<CVector>,
    /// Smallest eigenvalue of the matrix that was minimized (residual energy for oracle LS).
    pub lambda_min: f64,
    /// `λ_second / λ_max` of that matrix; NaN when not applicable.
    pub gap_ratio: f64,
    /// The two smallest eigenvalues coincide to working precision.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

fn normalized(mut v: CVector) -> Result<CVector> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::input("estimate has zero or non-finite norm"));
    }
    v /= C64::new(n, 0.0);
    canonicalize_phase(&mut v);
    Ok(v)
}

fn length_warnings(l: usize, k: usize) -> Vec<String> {
    if l < 3 * k {
        vec![format!("L = {l} is below 3K = {}; estimates may degrade", 3 * k)]
    } else {
        Vec::new()
    }
}

/// Cross-convolution estimate with the default dense eigensolver.
pub fn cc_solve(ys: &[Signal], k: usize) -> Result<Estimate> {
    cc_solve_with(ys, k, EigenStrategy::default())
}

/// Cross-convolution estimate. The iterative strategy never forms `YᴴY`.
pub fn cc_solve_with(ys: &[Signal], k: usize, strategy: EigenStrategy) -> Result<Estimate> {
    let l = validate(ys, k)?;
    let bottom = match strategy {
        EigenStrategy::Dense(_) => {
            let a = build_cross_corr_fast(ys, k)?;
            smallest_eigvec(a.dense(), strategy)?
        }
        EigenStrategy::Iterative(opts) => crate::spectral::smallest_iterative(&CrossCorrOperator { ys, k }, &opts)?,
    };
    Ok(Estimate {
        gap_ratio: bottom.gap_ratio(),
        h_hat: normalized(bottom.vector)?,
        u_hat: None,
        lambda_min: bottom.value,
        degenerate: bottom.degenerate,
        warnings: length_warnings(l, k),
    })
}

/// `Φᴴ(YᴴY − σ²(M−1)L·I)Φ`, assembled block by block.
pub fn sccc_matrix(ys: &[Signal], model: &SubspaceModel, sigma2: f64) -> Result<CMatrix> {
    let k = model.filter_len();
    let l = validate(ys, k)?;
    let (m, d) = (ys.len(), model.dim());
    if model.channels() != m {
        return Err(Error::dim(format!("model has {} channels, data has {m}", model.channels())));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::config(format!("noise variance must be >= 0, got {sigma2}")));
    }
    let yy = build_cross_corr_fast(ys, k)?;
    let shift = C64::new(sigma2 * (m - 1) as f64 * l as f64, 0.0);
    let bases = model.bases();
    let mut out = CMatrix::zeros(m * d, m * d);
    for n in 0..m {
        let left = bases[n].adjoint();
        for (c, right) in bases.iter().enumerate() {
            let mut block = &left * yy.block(n, c) * right;
            if n == c && sigma2 > 0.0 {
                block -= (&left * right) * shift;
            }
            out.view_mut((n * d, c * d), (d, d)).copy_from(&block);
        }
    }
    Ok(out)
}

/// Subspace-constrained cross-convolution estimate.
///
/// `sigma2` is the noise variance; it is an input because the debias term
/// needs it, and it is never estimated silently. `k` must match the model.
pub fn sccc_solve(ys: &[Signal], model: &SubspaceModel, sigma2: f64, k: usize) -> Result<Estimate> {
    if k != model.filter_len() {
        return Err(Error::dim(format!("K = {k} but the model has K = {}", model.filter_len())));
    }
    let l = validate(ys, k)?;
    let a = sccc_matrix(ys, model, sigma2)?;
    let bottom = smallest_eigvec(&a, EigenStrategy::default())?;
    let h = model.apply(&bottom.vector)?;
    Ok(Estimate {
        gap_ratio: bottom.gap_ratio(),
        h_hat: normalized(h)?,
        u_hat: Some(bottom.vector),
        lambda_min: bottom.value,
        degenerate: bottom.degenerate,
        warnings: length_warnings(l, k),
    })
}

/// Non-blind least squares with the source `x` known: per channel,
/// `min ‖C_x S* Φ_m u_m − y_m‖₂` by SVD.
pub fn oracle_ls_solve(ys: &[Signal], x: &Signal, model: &SubspaceModel) -> Result<Estimate> {
    let k = model.filter_len();
    let (m, d) = (ys.len(), model.dim());
    if m == 0 || model.channels() != m {
        return Err(Error::dim(format!("model has {} channels, data has {m}", model.channels())));
    }
    if ys.iter().any(|y| y.len() != x.len()) {
        return Err(Error::dim("channel outputs and source differ in length"));
    }
    let tx = t_matrix(x, k)?;
    let mut u = CVector::zeros(m * d);
    let mut residual = 0.0;
    for (c, (y, basis)) in ys.iter().zip(model.bases()).enumerate() {
        let a = &tx * basis;
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-12 * smax) {
            return Err(Error::config(format!("channel {c}: known-source system is rank deficient (smallest singular value {smin:e})")));
        }
        let b = y.to_vector();
        let sol = svd.solve(&b, 0.0).map_err(|e| Error::input(e.to_string()))?;
        residual += (&a * &sol - &b).norm_squared();
        u.rows_mut(c * d, d).copy_from(&sol);
    }
    let h = model.apply(&u)?;
    Ok(Estimate {
        h_hat: normalized(h)?,
        u_hat: Some(u),
        lambda_min: residual,
        gap_ratio: f64::NAN,
        degenerate: false,
        warnings: Vec::new(),
    })
}

/// DFT of each zero-padded basis column: `Ĝ_m ∈ ℂ^{L×D}`.
fn basis_spectra(model: &SubspaceModel, l: usize) -> Vec<CMatrix> {
    let (k, d) = (model.filter_len(), model.dim());
    model
        .bases()
        .iter()
        .map(|b| {
            let mut g = CMatrix::zeros(l, d);
            for j in 0..d {
                let mut col = vec![C64::new(0.0, 0.0); l];
                col[..k].copy_from_slice(b.column(j).as_slice());
                let spec = fft(&col);
                g.column_mut(j).copy_from_slice(&spec);
            }
            g
        })
        .collect()
}

/// Linearized frequency-domain least squares.
///
/// With `s = 1/x̂` elementwise, every channel satisfies
/// `diag(ŷ_m) s = Ĝ_m u_m`. Stacking all channels gives a homogeneous
/// system in `[s; u]`. Its least-squares solution under `‖[s; u]‖ = 1`
/// is the smallest right singular vector. The data are rescaled to unit
/// RMS first, so the estimate does not depend on the overall data scale.
///
/// Small output spectra make the system ill-posed; any bin with
/// `|ŷ_m[k]| < 1e-12·max|ŷ_m|` adds a warning to the estimate. If the
/// minimizer has no channel component at all, an input error carrying
/// those warnings is returned instead.
pub fn ls_linearized_solve(ys: &[Signal], model: &SubspaceModel) -> Result<Estimate> {
    let k = model.filter_len();
    let l = validate(ys, k)?;
    let (m, d) = (ys.len(), model.dim());
    if model.channels() != m {
        return Err(Error::dim(format!("model has {} channels, data has {m}", model.channels())));
    }
    let mut spectra: Vec<Vec<C64>> = ys.iter().map(|y| fft(y.values())).collect();
    let energy: f64 = spectra.iter().flatten().map(|z| z.norm_sqr()).sum();
    if !(energy > 0.0) {
        return Err(Error::input("all channel outputs are zero"));
    }
    let rms = (energy / (m * l) as f64).sqrt();
    let mut warnings = Vec::new();
    for (c, spec) in spectra.iter_mut().enumerate() {
        let peak = spec.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let weak = spec.iter().filter(|z| z.norm() < 1e-12 * peak).count();
        if weak > 0 {
            warnings.push(format!("channel {c}: {weak} output frequency bins are numerically zero; the linearized system is ill-posed"));
        }
        for z in spec.iter_mut() {
            *z /= rms;
        }
    }
    let g = basis_spectra(model, l);

    // Gram matrix of the stacked system, assembled from its block structure
    let n = l + m * d;
    let mut gram = CMatrix::zeros(n, n);
    for f in 0..l {
        gram[(f, f)] = C64::new(spectra.iter().map(|s| s[f].norm_sqr()).sum(), 0.0);
    }
    for c in 0..m {
        let off = l + c * d;
        let mut cross = g[c].clone();
        for f in 0..l {
            let w = -spectra[c][f].conj();
            for j in 0..d {
                cross[(f, j)] *= w;
            }
        }
        gram.view_mut((0, off), (l, d)).copy_from(&cross);
        gram.view_mut((off, 0), (d, l)).copy_from(&cross.adjoint());
        gram.view_mut((off, off), (d, d)).copy_from(&(g[c].adjoint() * &g[c]));
    }
    let bottom = smallest_eigvec(&gram, EigenStrategy::default())?;
    let u: CVector = bottom.vector.rows(l, m * d).into_owned();
    if u.norm() <= 1e-12 {
        let mut msg = "linearized system is ill-posed: the solution has no channel component".to_string();
        for w in &warnings {
            msg.push_str("; ");
            msg.push_str(w);
        }
        return Err(Error::input(msg));
    }
    let h = model.apply(&u)?;
    Ok(Estimate {
        gap_ratio: bottom.gap_ratio(),
        h_hat: normalized(h)?,
        u_hat: Some(u),
        lambda_min: bottom.value,
        degenerate: bottom.degenerate,
        warnings,
    })
}

/// Condition number of the known-filter convolution system in the
/// frequency domain, `sqrt(max_k Σ_m|ĥ_m[k]|² / min_k Σ_m|ĥ_m[k]|²)`.
/// Infinite when some bin is zero in every channel.
pub fn convolution_system_condition(h: &[Vec<C64>], l: usize) -> Result<f64> {
    if h.is_empty() {
        return Err(Error::input("no filters"));
    }
    let mut power = vec![0.0; l];
    for taps in h {
        if taps.len() > l {
            return Err(Error::dim(format!("filter length {} exceeds L = {l}", taps.len())));
        }
        let mut buf = vec![C64::new(0.0, 0.0); l];
        buf[..taps.len()].copy_from_slice(taps);
        for (p, z) in power.iter_mut().zip(fft(&buf)) {
            *p += z.norm_sqr();
        }
    }
    let max = power.iter().copied().fold(0.0, f64::max);
    let min = power.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if min > 0.0 { (max / min).sqrt() } else { f64::INFINITY })
}

/// Noise variance from frequency bins assumed to carry no signal:
/// `σ² = mean_{m, k ∈ mask} |ŷ_m[k]|² / L`.
///
/// Solvers never call this; pass its result to [`sccc_solve`] explicitly.
pub fn estimate_noise_variance(ys: &[Signal], out_of_band: &[bool]) -> Result<f64> {
    let Some(first) = ys.first() else {
        return Err(Error::input("no channel outputs"));
    };
    let l = first.len();
    if out_of_band.len() != l || ys.iter().any(|y| y.len() != l) {
        return Err(Error::dim(format!("mask and outputs must all have length {l}")));
    }
    let bins = out_of_band.iter().filter(|&&b| b).count();
    if bins == 0 {
        return Err(Error::input("out-of-band mask selects no bins"));
    }
    let mut total = 0.0;
    for y in ys {
        let spec = fft(y.values());
        total += spec.iter().zip(out_of_band).filter(|(_, &b)| b).map(|(z, _)| z.norm_sqr()).sum::<f64>();
    }
    Ok(total / (bins * ys.len() * l) as f64)
}
