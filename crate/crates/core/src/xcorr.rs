//! The cross-correlation matrix `YᴴY`.
//!
//! `Y` stacks one `L`-row strip per channel pair `i < j` encoding
//! `T_{y_j} h_i − T_{y_i} h_j = 0`. Its Gram matrix is an `M×M` grid of
//! `K×K` blocks
//!
//! ```text
//! B_{n,n} = Σ_{m'≠n} T_{y_m'}ᴴ T_{y_m'}
//! B_{n,m} = −T_{y_m}ᴴ T_{y_n}            (n ≠ m)
//! ```
//!
//! and every `T_aᴴ T_b` is the Toeplitz matrix `G[i,j] = c[(i−j) mod L]`
//! built from the circular cross-correlation `c` of `a` and `b`.

use crate::sigops::{fft, ifft_in_place, t_matrix, Signal};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Largest `MK·L` for which [`build_explicit_y`] will materialize `Y`.
pub const EXPLICIT_Y_CAP: usize = 1 << 22;

/// Hermitian `MK×MK` matrix `YᴴY`, addressed as `M×M` blocks of size `K×K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrMatrix {
    m: usize,
    k: usize,
    data: CMatrix,
}

impl CrossCorrMatrix {
    pub fn from_dense(m: usize, k: usize, data: CMatrix) -> Result<Self> {
        if data.nrows() != m * k || data.ncols() != m * k {
            return Err(Error::dim(format!("expected {}x{} matrix, got {}x{}", m * k, m * k, data.nrows(), data.ncols())));
        }
        Ok(CrossCorrMatrix { m, k, data })
    }

    pub fn channels(&self) -> usize {
        self.m
    }

    pub fn filter_len(&self) -> usize {
        self.k
    }

    pub fn dense(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_dense(self) -> CMatrix {
        self.data
    }

    /// Block `B_{n,m}` (0-based channel indices).
    pub fn block(&self, n: usize, m: usize) -> CMatrix {
        self.data.view((n * self.k, m * self.k), (self.k, self.k)).into_owned()
    }

    pub fn apply(&self, v: &CVector) -> Result<CVector> {
        if v.len() != self.data.ncols() {
            return Err(Error::dim(format!("vector length {} != {}", v.len(), self.data.ncols())));
        }
        Ok(&self.data * v)
    }

    /// Largest `‖B_{n,m} − B_{m,n}ᴴ‖_F`, relative to `‖YᴴY‖_F`.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.data.norm().max(f64::MIN_POSITIVE);
        (&self.data - self.data.adjoint()).norm() / scale
    }
}

pub(crate) fn validate(ys: &[Signal], k: usize) -> Result<usize> {
    if ys.len() < 2 {
        return Err(Error::config(format!("need at least 2 channels, got {}", ys.len())));
    }
    let l = ys[0].len();
    if let Some(bad) = ys.iter().find(|y| y.len() != l) {
        return Err(Error::dim(format!("channel outputs have lengths {l} and {}", bad.len())));
    }
    if k == 0 || k > l {
        return Err(Error::dim(format!("need 1 <= K <= L, got K = {k}, L = {l}")));
    }
    Ok(l)
}

/// Materializes `Y` (`M(M−1)L/2 × MK`) strip by strip.
///
/// Kept as the reference the fast paths are checked against; refuses
/// problems with `MK·L` above [`EXPLICIT_Y_CAP`].
pub fn build_explicit_y(ys: &[Signal], k: usize) -> Result<CMatrix> {
    let l = validate(ys, k)?;
    let m = ys.len();
    if m * k * l > EXPLICIT_Y_CAP {
        return Err(Error::config(format!("explicit Y too large: MK·L = {} > {EXPLICIT_Y_CAP}", m * k * l)));
    }
    let ts: Vec<CMatrix> = ys.iter().map(|y| t_matrix(y, k)).collect::<Result<_>>()?;
    let rows = m * (m - 1) / 2 * l;
    let mut out = CMatrix::zeros(rows, m * k);
    let mut strip = 0;
    for i in 0..m {
        for j in i + 1..m {
            let r0 = strip * l;
            out.view_mut((r0, i * k), (l, k)).copy_from(&ts[j]);
            out.view_mut((r0, j * k), (l, k)).copy_from(&(-&ts[i]));
            strip += 1;
        }
    }
    Ok(out)
}

/// `T_aᴴ T_b` from the spectra `fa = FFT(a)`, `fb = FFT(b)`.
fn gram_block(fa: &[C64], fb: &[C64], k: usize) -> CMatrix {
    let l = fa.len();
    let mut c: Vec<C64> = fa.iter().zip(fb).map(|(x, y)| x.conj() * y).collect();
    ifft_in_place(&mut c);
    CMatrix::from_fn(k, k, |i, j| c[(i + l - j) % l])
}

/// Builds `YᴴY` with `M(M+1)/2` length-`L` cross-correlations.
pub fn build_cross_corr_fast(ys: &[Signal], k: usize) -> Result<CrossCorrMatrix> {
    validate(ys, k)?;
    let m = ys.len();
    let spectra: Vec<Vec<C64>> = ys.iter().map(|y| fft(y.values())).collect();

    // upper-triangular Gram blocks G[a][b] = T_{y_a}ᴴ T_{y_b}, a <= b
    let mut grams: Vec<Vec<CMatrix>> = Vec::with_capacity(m);
    for a in 0..m {
        grams.push((a..m).map(|b| gram_block(&spectra[a], &spectra[b], k)).collect());
    }
    let gram = |a: usize, b: usize| -> CMatrix {
        if a <= b {
            grams[a][b - a].clone()
        } else {
            grams[b][a - b].adjoint()
        }
    };

    let mut data = CMatrix::zeros(m * k, m * k);
    for n in 0..m {
        let mut diag = CMatrix::zeros(k, k);
        for other in (0..m).filter(|&o| o != n) {
            diag += &grams[other][0];
        }
        data.view_mut((n * k, n * k), (k, k)).copy_from(&diag);
        for col in (0..m).filter(|&c| c != n) {
            let block = -gram(col, n);
            data.view_mut((n * k, col * k), (k, k)).copy_from(&block);
        }
    }
    CrossCorrMatrix::from_dense(m, k, data)
}

/// `YᴴY v` without forming any block; all work stays in the frequency domain.
pub fn apply_cross_corr(ys: &[Signal], k: usize, v: &CVector) -> Result<CVector> {
    let l = validate(ys, k)?;
    let m = ys.len();
    if v.len() != m * k {
        return Err(Error::dim(format!("vector length {} != MK = {}", v.len(), m * k)));
    }
    let spectra: Vec<Vec<C64>> = ys.iter().map(|y| fft(y.values())).collect();
    let vs: Vec<Vec<C64>> = (0..m)
        .map(|c| {
            let mut buf = vec![C64::new(0.0, 0.0); l];
            buf[..k].copy_from_slice(&v.as_slice()[c * k..(c + 1) * k]);
            fft(&buf)
        })
        .collect();
    let mut acc = vec![vec![C64::new(0.0, 0.0); l]; m];
    let mut r = vec![C64::new(0.0, 0.0); l];
    for i in 0..m {
        for j in i + 1..m {
            for f in 0..l {
                r[f] = spectra[j][f] * vs[i][f] - spectra[i][f] * vs[j][f];
            }
            for f in 0..l {
                acc[i][f] += spectra[j][f].conj() * r[f];
                acc[j][f] -= spectra[i][f].conj() * r[f];
            }
        }
    }
    let mut out = CVector::zeros(m * k);
    for (c, mut buf) in acc.into_iter().enumerate() {
        ifft_in_place(&mut buf);
        out.as_mut_slice()[c * k..(c + 1) * k].copy_from_slice(&buf[..k]);
    }
    Ok(out)
}

/// Matrix-free operator view of `YᴴY`, for the iterative eigensolver.
pub struct CrossCorrOperator<'a> {
    pub ys: &'a [Signal],
    pub k: usize,
}

impl crate::spectral::HermitianOperator for CrossCorrOperator<'_> {
    fn dim(&self) -> usize {
        self.ys.len() * self.k
    }

    fn apply(&self, v: &CVector) -> CVector {
        apply_cross_corr(self.ys, self.k, v).expect("operator dimensions validated at construction")
    }
}
