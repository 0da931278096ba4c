//! Random generators for experiment instances.
//!
//! Every draw comes from a substream derived from `(master_seed, label,
//! index)`, so the same triple gives the same numbers no matter the order
//! in which substreams are consumed or how many threads consume them.

use std::io::{BufRead, Write};

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::sigops::{circular_convolve, fft, ifft_in_place, ShortFilter, Signal};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Deterministic substream factory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededRng {
    master_seed: u64,
}

impl SeededRng {
    pub fn new(master_seed: u64) -> Self {
        SeededRng { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Independent generator for `(label, index)`.
    pub fn stream(&self, label: &str, index: u64) -> ChaCha20Rng {
        let mut hasher = Sha256::new();
        hasher.update(b"blindchan/stream/v1");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.update(index.to_le_bytes());
        ChaCha20Rng::from_seed(hasher.finalize().into())
    }
}

/// One draw of `CN(0, variance)`: real and imaginary parts `N(0, variance/2)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn complex_gaussian_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> Vec<C64> {
    (0..len).map(|_| complex_gaussian(rng, variance)).collect()
}

/// `M` filters of common length `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEnsemble {
    filters: Vec<ShortFilter>,
}

impl ChannelEnsemble {
    pub fn new(filters: Vec<ShortFilter>) -> Result<Self> {
        let Some(first) = filters.first() else {
            return Err(Error::input("ensemble needs at least one filter"));
        };
        let k = first.len();
        if filters.iter().any(|f| f.len() != k) {
            return Err(Error::dim("all filters in an ensemble must share K"));
        }
        Ok(ChannelEnsemble { filters })
    }

    pub fn from_stacked(stacked: &CVector, m: usize) -> Result<Self> {
        if m == 0 || !stacked.len().is_multiple_of(m) {
            return Err(Error::dim(format!("cannot split length {} into {m} channels", stacked.len())));
        }
        let k = stacked.len() / m;
        let filters = stacked.as_slice().chunks(k).map(|c| ShortFilter::new(c.to_vec())).collect::<Result<_>>()?;
        ChannelEnsemble::new(filters)
    }

    pub fn filters(&self) -> &[ShortFilter] {
        &self.filters
    }

    pub fn channels(&self) -> usize {
        self.filters.len()
    }

    pub fn filter_len(&self) -> usize {
        self.filters[0].len()
    }

    /// `h = [h_1; …; h_M] ∈ ℂ^{MK}`.
    pub fn stacked(&self) -> CVector {
        let n = self.channels() * self.filter_len();
        CVector::from_iterator(n, self.filters.iter().flat_map(|f| f.values().iter().copied()))
    }

    /// Noise-free outputs `h_m ⊛ x`.
    pub fn convolve(&self, x: &Signal) -> Result<Vec<Signal>> {
        self.filters.iter().map(|h| circular_convolve(x, &h.zero_pad(x.len())?)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    #[default]
    Gaussian,
    Pca,
    Custom,
}

/// Block-diagonal basis `Φ = diag(Φ_1, …, Φ_M)`, `Φ_m ∈ ℂ^{K×D}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceModel {
    bases: Vec<CMatrix>,
    kind: BasisKind,
}

impl SubspaceModel {
    /// Validates shapes and full column rank of every block.
    pub fn new(bases: Vec<CMatrix>, kind: BasisKind) -> Result<Self> {
        let Some(first) = bases.first() else {
            return Err(Error::config("subspace model needs at least one block"));
        };
        let (k, d) = first.shape();
        if d == 0 || d > k {
            return Err(Error::config(format!("need 1 <= D <= K, got K = {k}, D = {d}")));
        }
        for (m, b) in bases.iter().enumerate() {
            if b.shape() != (k, d) {
                return Err(Error::dim(format!("block {m} is {:?}, expected ({k}, {d})", b.shape())));
            }
            if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::input(format!("block {m} has non-finite entries")));
            }
            let sv = b.singular_values();
            let smax = sv.max();
            let smin = sv.min();
            if !(smin > 1e-12 * smax) {
                return Err(Error::config(format!("block {m} is rank deficient (smallest singular value {smin:e})")));
            }
        }
        Ok(SubspaceModel { bases, kind })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn bases(&self) -> &[CMatrix] {
        &self.bases
    }

    pub fn channels(&self) -> usize {
        self.bases.len()
    }

    pub fn filter_len(&self) -> usize {
        self.bases[0].nrows()
    }

    pub fn dim(&self) -> usize {
        self.bases[0].ncols()
    }

    /// `Φu`: concatenation of `Φ_m u_m`.
    pub fn apply(&self, u: &CVector) -> Result<CVector> {
        let (k, d, m) = (self.filter_len(), self.dim(), self.channels());
        if u.len() != m * d {
            return Err(Error::dim(format!("coefficient length {} != MD = {}", u.len(), m * d)));
        }
        let mut out = CVector::zeros(m * k);
        for (c, b) in self.bases.iter().enumerate() {
            let block = b * u.rows(c * d, d);
            out.rows_mut(c * k, k).copy_from(&block);
        }
        Ok(out)
    }

    /// `Φᴴv`.
    pub fn adjoint_apply(&self, v: &CVector) -> Result<CVector> {
        let (k, d, m) = (self.filter_len(), self.dim(), self.channels());
        if v.len() != m * k {
            return Err(Error::dim(format!("vector length {} != MK = {}", v.len(), m * k)));
        }
        let mut out = CVector::zeros(m * d);
        for (c, b) in self.bases.iter().enumerate() {
            let block = b.adjoint() * v.rows(c * k, k);
            out.rows_mut(c * d, d).copy_from(&block);
        }
        Ok(out)
    }

    /// Dense `MK×MD` block-diagonal matrix.
    pub fn dense(&self) -> CMatrix {
        let (k, d, m) = (self.filter_len(), self.dim(), self.channels());
        let mut out = CMatrix::zeros(m * k, m * d);
        for (c, b) in self.bases.iter().enumerate() {
            out.view_mut((c * k, c * d), (k, d)).copy_from(b);
        }
        out
    }

    pub fn condition_numbers(&self) -> Vec<f64> {
        self.bases
            .iter()
            .map(|b| {
                let sv = b.singular_values();
                sv.max() / sv.min()
            })
            .collect()
    }

    /// Reads the text format written by [`SubspaceModel::write_text`].
    ///
    /// ```text
    /// # comments and blank lines are ignored
    /// K D M
    /// re im      <- K·D·M lines: block 1 column-major, then block 2, …
    /// ```
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut numbers = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::input(format!("bad number {tok:?} in basis file")))?;
                numbers.push(v);
            }
        }
        if numbers.len() < 3 {
            return Err(Error::input("basis file is missing its `K D M` header"));
        }
        let dims: Vec<usize> = numbers[..3]
            .iter()
            .map(|&v| {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::input(format!("header entry {v} is not a positive integer")))
                }
            })
            .collect::<Result<_>>()?;
        let (k, d, m) = (dims[0], dims[1], dims[2]);
        let body = &numbers[3..];
        if body.len() != 2 * k * d * m {
            return Err(Error::input(format!("basis file has {} values, expected {}", body.len(), 2 * k * d * m)));
        }
        let bases =
            body.chunks(2 * k * d).map(|chunk| CMatrix::from_iterator(k, d, chunk.chunks(2).map(|p| C64::new(p[0], p[1])))).collect();
        SubspaceModel::new(bases, BasisKind::Custom)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# K D M, then re im per entry, column-major, one block per channel")?;
        writeln!(w, "{} {} {}", self.filter_len(), self.dim(), self.channels())?;
        for b in &self.bases {
            for z in b.iter() {
                writeln!(w, "{:e} {:e}", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

/// `M` independent `K×D` bases with iid `CN(0,1)` entries.
pub fn gen_gaussian_subspace<R: Rng + ?Sized>(k: usize, d: usize, m: usize, rng: &mut R) -> Result<SubspaceModel> {
    if d == 0 || d > k {
        return Err(Error::config(format!("need 1 <= D <= K, got K = {k}, D = {d}")));
    }
    if m == 0 {
        return Err(Error::config("need at least one channel"));
    }
    let bases = (0..m)
        .map(|_| {
            let entries = complex_gaussian_vec(rng, k * d, 1.0);
            CMatrix::from_vec(k, d, entries)
        })
        .collect();
    SubspaceModel::new(bases, BasisKind::Gaussian)
}

/// Parametric band-pass channel family: a Gaussian-windowed cosine placed
/// at a random continuous delay and scaled by a random amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct PulseFamily {
    /// Carrier frequency as a fraction of Nyquist.
    pub center_freq: f64,
    /// Window standard deviation as a fraction of `K`.
    pub width_over_k: f64,
    /// Window half-width in standard deviations; the pulse support is `2·this·σ`.
    /// Default is where the envelope drops to 1e-3 of its peak.
    pub support_sigmas: f64,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
}

impl Default for PulseFamily {
    fn default() -> Self {
        PulseFamily {
            center_freq: 0.25,
            width_over_k: 1.0 / 8.0,
            support_sigmas: (2.0 * 1000f64.ln()).sqrt(),
            amplitude_min: 0.5,
            amplitude_max: 2.0,
        }
    }
}

impl PulseFamily {
    pub fn support(&self, k: usize) -> f64 {
        2.0 * self.support_sigmas * self.width_over_k * k as f64
    }

    /// One filter of length `K`.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<ShortFilter> {
        let support = self.support(k);
        if support > k as f64 {
            return Err(Error::config(format!("pulse support {support:.2} exceeds K = {k}")));
        }
        let sigma = self.width_over_k * k as f64;
        let shift = rng.gen::<f64>() * (k as f64 - support);
        let center = shift + support / 2.0;
        let amplitude = (self.amplitude_min.ln() + rng.gen::<f64>() * (self.amplitude_max.ln() - self.amplitude_min.ln())).exp();
        let omega = std::f64::consts::PI * self.center_freq;
        let taps = (0..k)
            .map(|n| {
                let t = n as f64 - center;
                C64::new(amplitude * (-t * t / (2.0 * sigma * sigma)).exp() * (omega * t).cos(), 0.0)
            })
            .collect();
        ShortFilter::new(taps)
    }

    pub fn sample_ensemble<R: Rng + ?Sized>(&self, k: usize, m: usize, rng: &mut R) -> Result<ChannelEnsemble> {
        ChannelEnsemble::new((0..m).map(|_| self.sample(k, rng)).collect::<Result<_>>()?)
    }
}

/// Top-`D` principal directions of `n_train` filters drawn from `family`,
/// shared by all `M` channels.
pub fn gen_pca_subspace<R: Rng + ?Sized>(
    family: &PulseFamily,
    k: usize,
    d: usize,
    m: usize,
    n_train: usize,
    rng: &mut R,
) -> Result<SubspaceModel> {
    if d == 0 || d > k {
        return Err(Error::config(format!("need 1 <= D <= K, got K = {k}, D = {d}")));
    }
    if n_train < d {
        return Err(Error::config(format!("n_train = {n_train} is smaller than D = {d}")));
    }
    let mut moment = CMatrix::zeros(k, k);
    for _ in 0..n_train {
        let h = family.sample(k, rng)?;
        let v = CVector::from_column_slice(h.values());
        moment += &v * v.adjoint();
    }
    moment /= C64::new(n_train as f64, 0.0);
    let eig = SymmetricEigen::new(crate::spectral::symmetrize(&moment));
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]];
    let dth = eig.eigenvalues[order[d - 1]];
    if !(dth > 1e-12 * top) {
        return Err(Error::config(format!("training matrix has rank below D = {d}")));
    }
    let mut basis = CMatrix::zeros(k, d);
    for (dst, &src) in order.iter().take(d).enumerate() {
        let mut col: CVector = eig.eigenvectors.column(src).into_owned();
        crate::spectral::canonicalize_phase(&mut col);
        basis.set_column(dst, &col);
    }
    SubspaceModel::new(vec![basis; m], BasisKind::Pca)
}

/// How energy is spread across the coefficient blocks `u_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormProfile {
    /// Every block has unit norm (`μ = 1`).
    #[default]
    Flat,
    /// One randomly chosen block carries all the energy (`μ = √M`).
    Spiky,
}

/// Draws `u` and returns it together with the channels `h = Φu`.
pub fn gen_channels_in_subspace<R: Rng + ?Sized>(model: &SubspaceModel, rng: &mut R, profile: NormProfile) -> (CVector, ChannelEnsemble) {
    let (d, m) = (model.dim(), model.channels());
    let mut u = CVector::from_vec(complex_gaussian_vec(rng, m * d, 1.0));
    match profile {
        NormProfile::Flat => {
            for c in 0..m {
                let mut block = u.rows_mut(c * d, d);
                let n = block.norm();
                block /= C64::new(n, 0.0);
            }
        }
        NormProfile::Spiky => {
            let keep = rng.gen_range(0..m);
            for c in (0..m).filter(|&c| c != keep) {
                u.rows_mut(c * d, d).fill(C64::new(0.0, 0.0));
            }
        }
    }
    let h = model.apply(&u).expect("u sized from the model");
    let channels = ChannelEnsemble::from_stacked(&h, m).expect("h sized from the model");
    (u, channels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// iid `CN(0, σ_x²)`.
    #[default]
    Gaussian,
    /// Constant spectral magnitude with random phases; `‖x‖² = Lσ_x²`.
    FlatSpectrum,
}

pub fn gen_source<R: Rng + ?Sized>(kind: SourceKind, l: usize, sigma_x: f64, rng: &mut R) -> Result<Signal> {
    if l == 0 {
        return Err(Error::config("source length must be >= 1"));
    }
    match kind {
        SourceKind::Gaussian => Signal::new(complex_gaussian_vec(rng, l, sigma_x * sigma_x)),
        SourceKind::FlatSpectrum => {
            // unnormalized spectrum magnitude σ_x·√L, i.e. |x̂| = σ_x for the unitary DFT
            let mag = sigma_x * (l as f64).sqrt();
            let mut spec: Vec<C64> = (0..l).map(|_| C64::from_polar(mag, 2.0 * std::f64::consts::PI * rng.gen::<f64>())).collect();
            ifft_in_place(&mut spec);
            Signal::new(spec)
        }
    }
}

/// `s + w` with `w` iid `CN(0, σ_w²)`.
pub fn add_noise<R: Rng + ?Sized>(s: &Signal, sigma_w: f64, rng: &mut R) -> Result<Signal> {
    if !(sigma_w >= 0.0) {
        return Err(Error::config(format!("noise level must be >= 0, got {sigma_w}")));
    }
    if sigma_w == 0.0 {
        return Ok(s.clone());
    }
    let w = Signal::new(complex_gaussian_vec(rng, s.len(), sigma_w * sigma_w))?;
    s.add(&w)
}

/// `η = 10^{dB/10}`.
pub fn db_to_eta(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Noise variance giving SNR `η` under a Gaussian basis: `σ_w² = K‖x‖²‖u‖²/(MLη)`.
pub fn sigma_for_snr(eta: f64, k: usize, l: usize, m: usize, x: &Signal, u: &CVector) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::config(format!("target SNR must be positive, got {eta}")));
    }
    let (xe, ue) = (x.norm_sqr(), u.norm_squared());
    if xe == 0.0 || ue == 0.0 {
        return Err(Error::config("source and coefficients must have nonzero energy"));
    }
    Ok(k as f64 * xe * ue / (m as f64 * l as f64 * eta))
}

/// Noise variance giving SNR `η` measured on the actual clean outputs:
/// `σ_w² = Σ_m ‖s_m‖² / (MLη)`.
pub fn sigma_for_snr_measured(eta: f64, clean: &[Signal]) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::config(format!("target SNR must be positive, got {eta}")));
    }
    let m = clean.len();
    let l = clean.first().map(|s| s.len()).unwrap_or(0);
    let energy: f64 = clean.iter().map(|s| s.norm_sqr()).sum();
    if m == 0 || energy == 0.0 {
        return Err(Error::config("clean outputs must have nonzero energy"));
    }
    Ok(energy / (m as f64 * l as f64 * eta))
}

/// Normalized DFT magnitude peak `max_k |x̂_k|²` with `x̂ = Fx/√L`.
pub fn spectral_peak(x: &Signal) -> f64 {
    let l = x.len() as f64;
    fft(x.values()).iter().map(|z| z.norm_sqr() / l).fold(0.0, f64::max)
}
