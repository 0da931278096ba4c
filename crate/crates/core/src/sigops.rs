//! Signals, circular convolution and the window-restriction operators.
//!
//! Index conventions are 0-based. The circulant `C_v` has first column `v`,
//! so `C_v b = v ⊛ b` with `(v ⊛ b)[l] = Σ_k v[k]·b[(l−k) mod L]`.

use std::cell::RefCell;

use rustfft::FftPlanner;

use crate::{CMatrix, CVector, Error, Result, C64};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT in place.
pub fn fft_in_place(buf: &mut [C64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// Inverse DFT in place, scaled by `1/L`.
pub fn ifft_in_place(buf: &mut [C64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for z in buf.iter_mut() {
        *z *= scale;
    }
}

pub fn fft(values: &[C64]) -> Vec<C64> {
    let mut buf = values.to_vec();
    fft_in_place(&mut buf);
    buf
}

pub fn ifft(values: &[C64]) -> Vec<C64> {
    let mut buf = values.to_vec();
    ifft_in_place(&mut buf);
    buf
}

/// A length-`L` complex signal with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<C64>,
}

impl Signal {
    pub fn new(values: Vec<C64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("signal must have length >= 1"));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::input("signal entries must be finite"));
        }
        Ok(Signal { values })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Signal::new(values.iter().map(|&r| C64::new(r, 0.0)).collect())
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Signal::new(vec![C64::new(0.0, 0.0); len])
    }

    /// Unit impulse at `index`; `impulse(l, 0)` is δ₀.
    pub fn impulse(len: usize, index: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::dim(format!("impulse index {index} outside length {len}")));
        }
        let mut s = Signal::zeros(len)?;
        s.values[index] = C64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, c: C64) -> Signal {
        Signal { values: self.values.iter().map(|z| z * c).collect() }
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        same_len(self.len(), other.len())?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Signal { values })
    }

    pub fn to_vector(&self) -> CVector {
        CVector::from_column_slice(&self.values)
    }
}

/// The `K` leading taps of a channel impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortFilter {
    values: Vec<C64>,
}

impl ShortFilter {
    pub fn new(values: Vec<C64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("filter must have length >= 1"));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::input("filter entries must be finite"));
        }
        Ok(ShortFilter { values })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        ShortFilter::new(values.iter().map(|&r| C64::new(r, 0.0)).collect())
    }

    /// Number of taps `K`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `S* h`: the filter followed by `L − K` zeros.
    pub fn zero_pad(&self, len: usize) -> Result<Signal> {
        if self.len() > len {
            return Err(Error::dim(format!("filter length {} exceeds signal length {len}", self.len())));
        }
        let mut values = self.values.clone();
        values.resize(len, C64::new(0.0, 0.0));
        Ok(Signal { values })
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::dim(format!("lengths differ: {a} vs {b}")));
    }
    Ok(())
}

/// Circular convolution of two equal-length signals via the FFT.
pub fn circular_convolve(a: &Signal, b: &Signal) -> Result<Signal> {
    same_len(a.len(), b.len())?;
    let mut fa = fft(a.values());
    let fb = fft(b.values());
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    ifft_in_place(&mut fa);
    Ok(Signal { values: fa })
}

/// Circular cross-correlation `c[d] = Σ_t conj(a[t])·b[(t+d) mod L]`.
///
/// This is the first column of the circulant `C_aᴴ C_b`.
pub fn circular_xcorr(a: &Signal, b: &Signal) -> Result<Vec<C64>> {
    same_len(a.len(), b.len())?;
    let fa = fft(a.values());
    let mut fb = fft(b.values());
    for (y, x) in fb.iter_mut().zip(&fa) {
        *y *= x.conj();
    }
    ifft_in_place(&mut fb);
    Ok(fb)
}

/// `T_v h = C_v S* h`.
pub fn apply_t(v: &Signal, h: &ShortFilter) -> Result<Signal> {
    circular_convolve(v, &h.zero_pad(v.len())?)
}

/// `T_vᴴ z = S C_vᴴ z`, returning `K` entries.
pub fn apply_t_adjoint(v: &Signal, z: &Signal, k: usize) -> Result<Vec<C64>> {
    if k > v.len() {
        return Err(Error::dim(format!("K = {k} exceeds L = {}", v.len())));
    }
    let mut c = circular_xcorr(v, z)?;
    c.truncate(k);
    Ok(c)
}

/// Dense circulant `C_v` (first column `v`).
pub fn circulant_matrix(v: &Signal) -> CMatrix {
    let l = v.len();
    CMatrix::from_fn(l, l, |i, j| v.values[(i + l - j) % l])
}

/// Dense `L×K` matrix `T_v = C_v S*`.
pub fn t_matrix(v: &Signal, k: usize) -> Result<CMatrix> {
    let l = v.len();
    if k > l {
        return Err(Error::dim(format!("K = {k} exceeds L = {l}")));
    }
    Ok(CMatrix::from_fn(l, k, |i, j| v.values[(i + l - j) % l]))
}

/// Which window a [`RestrictionOp`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestrictionKind {
    /// `S`: indices `0..K`.
    Head,
    /// `S̆`: the last `K−1` indices, then `0..K` (support of a product of two length-`K` convolutions).
    Pair,
    /// `S̃`: the last `K−1` indices, then `0..2K−1`.
    Triple,
}

/// A row-selection operator `ℂ^L → ℂ^R`, each row a unit vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestrictionOp {
    kind: RestrictionKind,
    k: usize,
    l: usize,
    indices: Vec<usize>,
}

impl RestrictionOp {
    pub fn new(kind: RestrictionKind, k: usize, l: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("K must be positive"));
        }
        let rows = match kind {
            RestrictionKind::Head => k,
            RestrictionKind::Pair => 2 * k - 1,
            RestrictionKind::Triple => 3 * k - 2,
        };
        if rows > l {
            return Err(Error::config(format!("{kind:?} restriction needs {rows} <= L = {l}")));
        }
        let head = match kind {
            RestrictionKind::Head => k,
            RestrictionKind::Pair => k,
            RestrictionKind::Triple => 2 * k - 1,
        };
        let mut indices = Vec::with_capacity(rows);
        if kind != RestrictionKind::Head {
            indices.extend(l - (k - 1)..l);
        }
        indices.extend(0..head);
        Ok(RestrictionOp { kind, k, l, indices })
    }

    pub fn kind(&self) -> RestrictionKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Source index (0-based) selected by each output row.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn rows(&self) -> usize {
        self.indices.len()
    }

    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        same_len(v.len(), self.l)?;
        Ok(self.indices.iter().map(|&i| v[i]).collect())
    }

    /// Zero-fills the complementary positions.
    pub fn adjoint(&self, z: &[C64]) -> Result<Vec<C64>> {
        same_len(z.len(), self.rows())?;
        let mut out = vec![C64::new(0.0, 0.0); self.l];
        for (&i, &val) in self.indices.iter().zip(z) {
            out[i] = val;
        }
        Ok(out)
    }

    pub fn matrix(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.rows(), self.l);
        for (r, &c) in self.indices.iter().enumerate() {
            m[(r, c)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// `R C Rᴴ` for the circulant `C` with first column `col`, without forming `C`.
    pub fn restrict_circulant(&self, col: &[C64]) -> Result<CMatrix> {
        same_len(col.len(), self.l)?;
        let l = self.l;
        let idx = &self.indices;
        Ok(CMatrix::from_fn(idx.len(), idx.len(), |a, b| col[(idx[a] + l - idx[b]) % l]))
    }
}
