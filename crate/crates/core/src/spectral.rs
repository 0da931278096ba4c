//! Hermitian eigen-decomposition services.
//!
//! Two dense paths are available: a cyclic complex Jacobi sweep and a
//! Householder tridiagonalization followed by implicit QL (from `nalgebra`).
//! [`EigenMethod::Auto`] picks Jacobi for small matrices and the
//! tridiagonal path above [`JACOBI_MAX_DIM`]. Eigenvectors are returned with
//! a canonical phase: the largest-magnitude entry is real and positive.

use nalgebra::SymmetricEigen;

use crate::{CMatrix, CVector, Error, Result, C64};

/// Largest dimension `Auto` hands to the Jacobi solver.
pub const JACOBI_MAX_DIM: usize = 160;

/// Relative gap below which the two smallest eigenvalues count as equal.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    #[default]
    Auto,
    Jacobi,
    Tridiagonal,
}

/// How [`smallest_eigvec`] finds the bottom eigenpair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigenStrategy {
    Dense(EigenMethod),
    /// Power iteration on `σI − A`.
    Iterative(PowerOptions),
}

impl Default for EigenStrategy {
    fn default() -> Self {
        EigenStrategy::Dense(EigenMethod::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Power steps on `A` used to estimate `λ_max`.
    pub warmup_steps: usize,
    /// Convergence threshold on the sin-angle between successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// `σ = shift_factor · λ̂_max`.
    pub shift_factor: f64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions { warmup_steps: 50, tol: 1e-10, max_iter: 10_000, shift_factor: 1.01 }
    }
}

/// A Hermitian linear map given only by its action.
pub trait HermitianOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &CVector) -> CVector;
}

impl HermitianOperator for CMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &CVector) -> CVector {
        self * v
    }
}

/// Full spectrum, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    /// Column `i` belongs to `eigenvalues[i]`.
    pub eigenvectors: Option<CMatrix>,
    /// `max_i ‖A v_i − λ_i v_i‖₂ / ‖A‖₂`.
    pub residual: f64,
}

/// Bottom eigenpair and what is known about its neighbourhood.
#[derive(Debug, Clone)]
pub struct SmallestEigen {
    pub value: f64,
    pub vector: CVector,
    /// Second smallest eigenvalue (dense paths only).
    pub second: Option<f64>,
    /// Largest eigenvalue magnitude (estimated on the iterative path).
    pub max: f64,
    pub degenerate: bool,
    /// `‖A v − λ v‖₂ / ‖A‖₂`.
    pub residual: f64,
}

impl SmallestEigen {
    /// `λ_second / λ_max`, or NaN when the second eigenvalue is unknown.
    pub fn gap_ratio(&self) -> f64 {
        match self.second {
            Some(s) if self.max > 0.0 => s / self.max,
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub lambda_min: f64,
    pub lambda_second: f64,
    pub lambda_max: f64,
    pub gap_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DavisKahanReport {
    /// `‖E‖ ≤ (λ_{n−1} − λ_n)/5`.
    pub premise_holds: bool,
    /// `sin∠(q, q̂)`.
    pub lhs: f64,
    /// `4‖E q‖₂ / (λ_{n−1} − λ_n)`.
    pub rhs: f64,
    pub gap: f64,
    pub e_norm: f64,
}

impl DavisKahanReport {
    /// The inequality holds, or its premise does not apply.
    pub fn consistent(&self, slack: f64) -> bool {
        !self.premise_holds || self.lhs <= self.rhs + slack
    }
}

fn check_square_finite(a: &CMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim(format!("matrix is {}x{}, not square", a.nrows(), a.ncols())));
    }
    if a.nrows() == 0 {
        return Err(Error::input("empty matrix"));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::input("matrix has non-finite entries"));
    }
    Ok(())
}

/// `(A + Aᴴ)/2`.
pub fn symmetrize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Rotates `v` so its largest-magnitude entry is real and positive.
pub fn canonicalize_phase(v: &mut CVector) {
    let mut best = 0usize;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        let mag = z.norm();
        if mag > best_mag {
            best_mag = mag;
            best = i;
        }
    }
    if best_mag > 0.0 {
        let phase = v[best].conj() / best_mag;
        *v *= phase;
        v[best] = C64::new(v[best].norm(), 0.0);
    }
}

/// Cyclic Jacobi on a Hermitian matrix. Returns unsorted `(values, vectors)`.
pub fn jacobi_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = CMatrix::identity(n, n);
    let fro = a.norm();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for q in 0..n {
            for p in 0..q {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * fro {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                // U = diag(1, e^{-iφ}) · R(θ) on the (p, q) plane
                let phase = apq / r;
                let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * r);
                let t = if theta >= 0.0 { 1.0 } else { -1.0 } / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let e_col = phase.conj();
                for i in 0..n {
                    let x = a[(i, p)];
                    let y = a[(i, q)] * e_col;
                    a[(i, p)] = x * c - y * s;
                    a[(i, q)] = x * s + y * c;
                }
                for j in 0..n {
                    let x = a[(p, j)];
                    let y = a[(q, j)] * phase;
                    a[(p, j)] = x * c - y * s;
                    a[(q, j)] = x * s + y * c;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                for i in 0..n {
                    let x = v[(i, p)];
                    let y = v[(i, q)] * e_col;
                    v[(i, p)] = x * c - y * s;
                    v[(i, q)] = x * s + y * c;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)].re).collect(), v)
}

/// Symmetrized, sorted (descending) and phase-canonicalized decomposition.
fn decompose(a: &CMatrix, method: EigenMethod) -> Result<(CMatrix, Vec<f64>, CMatrix)> {
    check_square_finite(a)?;
    let sym = symmetrize(a);
    let n = sym.nrows();
    let use_jacobi = match method {
        EigenMethod::Jacobi => true,
        EigenMethod::Tridiagonal => false,
        EigenMethod::Auto => n <= JACOBI_MAX_DIM,
    };
    let (values, vectors) = if use_jacobi {
        jacobi_eigen(&sym)
    } else {
        let eig = SymmetricEigen::new(sym.clone());
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut sorted_vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col: CVector = vectors.column(src).into_owned();
        canonicalize_phase(&mut col);
        sorted_vectors.set_column(dst, &col);
    }
    Ok((sym, sorted_values, sorted_vectors))
}

fn operator_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Full decomposition of a Hermitian matrix (symmetrized first).
pub fn eig_hermitian(a: &CMatrix) -> Result<EigenResult> {
    eig_hermitian_with(a, EigenMethod::Auto)
}

pub fn eig_hermitian_with(a: &CMatrix, method: EigenMethod) -> Result<EigenResult> {
    let (sym, values, vectors) = decompose(a, method)?;
    let norm = operator_norm(&values).max(f64::MIN_POSITIVE);
    let av = &sym * &vectors;
    let mut residual: f64 = 0.0;
    for (i, &lambda) in values.iter().enumerate() {
        let r = (av.column(i) - vectors.column(i) * C64::new(lambda, 0.0)).norm();
        residual = residual.max(r / norm);
    }
    Ok(EigenResult { eigenvalues: values, eigenvectors: Some(vectors), residual })
}

/// Eigenvalues only, sorted descending.
pub fn eigenvalues_hermitian(a: &CMatrix) -> Result<Vec<f64>> {
    check_square_finite(a)?;
    let sym = symmetrize(a);
    let mut values: Vec<f64> =
        if sym.nrows() <= JACOBI_MAX_DIM { jacobi_eigen(&sym).0 } else { SymmetricEigen::new(sym).eigenvalues.iter().copied().collect() };
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Bottom eigenpair of a dense Hermitian matrix.
pub fn smallest_eigvec(a: &CMatrix, strategy: EigenStrategy) -> Result<SmallestEigen> {
    match strategy {
        EigenStrategy::Dense(method) => smallest_dense(a, method),
        EigenStrategy::Iterative(opts) => {
            check_square_finite(a)?;
            smallest_iterative(&symmetrize(a), &opts)
        }
    }
}

fn smallest_dense(a: &CMatrix, method: EigenMethod) -> Result<SmallestEigen> {
    let (sym, values, vectors) = decompose(a, method)?;
    let n = values.len();
    let value = values[n - 1];
    let vector: CVector = vectors.column(n - 1).into_owned();
    let max = operator_norm(&values);
    let second = if n >= 2 { Some(values[n - 2]) } else { None };
    let degenerate = second.is_some_and(|s| s - value <= DEGENERACY_TOL * max);
    let residual = (&sym * &vector - &vector * C64::new(value, 0.0)).norm() / max.max(f64::MIN_POSITIVE);
    Ok(SmallestEigen { value, vector, second, max, degenerate, residual })
}

fn start_vector(n: usize) -> CVector {
    let v = CVector::from_iterator(
        n,
        (0..n).map(|j| {
            let a = ((j * 7919) % 97) as f64 / 97.0;
            let b = ((j * 104_729) % 89) as f64 / 89.0;
            C64::new(1.0 + a, b - 0.5)
        }),
    );
    let norm = v.norm();
    v / C64::new(norm, 0.0)
}

/// `sin∠(a, b)` for unit vectors, via the projection residual.
fn unit_sin_angle(a: &CVector, b: &CVector) -> f64 {
    let proj = a.dotc(b);
    (b - a * proj).norm().min(1.0)
}

/// Bottom eigenpair by power iteration on `σI − A`, touching `A` only through `apply`.
pub fn smallest_iterative<O: HermitianOperator + ?Sized>(op: &O, opts: &PowerOptions) -> Result<SmallestEigen> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::input("empty operator"));
    }
    let mut v = start_vector(n);
    let mut lambda_max = 0.0;
    for _ in 0..opts.warmup_steps {
        let w = op.apply(&v);
        lambda_max = v.dotc(&w).re;
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / C64::new(norm, 0.0);
    }
    if lambda_max <= 0.0 {
        // zero operator: every vector is a null vector
        let v = start_vector(n);
        return Ok(SmallestEigen { value: 0.0, vector: v, second: None, max: 0.0, degenerate: true, residual: 0.0 });
    }
    let sigma = opts.shift_factor * lambda_max;
    let mut v = start_vector(n);
    let mut last_residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let av = op.apply(&v);
        let w = &v * C64::new(sigma, 0.0) - &av;
        let norm = w.norm();
        let next = w / C64::new(norm, 0.0);
        let step = unit_sin_angle(&v, &next);
        v = next;
        if step < opts.tol {
            let mut vector = v;
            canonicalize_phase(&mut vector);
            let av = op.apply(&vector);
            let value = vector.dotc(&av).re;
            let residual = (&av - &vector * C64::new(value, 0.0)).norm() / lambda_max;
            return Ok(SmallestEigen { value, vector, second: None, max: lambda_max, degenerate: false, residual });
        }
        let rq = v.dotc(&av).re;
        last_residual = (&av - &v * C64::new(rq, 0.0)).norm() / lambda_max;
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: last_residual })
}

/// Two smallest eigenvalues and `λ_second / λ_max`.
pub fn spectral_gap(a: &CMatrix) -> Result<GapReport> {
    if a.nrows() < 2 {
        return Err(Error::input("spectral gap needs dimension >= 2"));
    }
    let values = eigenvalues_hermitian(a)?;
    let n = values.len();
    let lambda_max = values[0];
    if lambda_max <= 0.0 {
        return Err(Error::input("largest eigenvalue is not positive"));
    }
    Ok(GapReport { lambda_min: values[n - 1], lambda_second: values[n - 2], lambda_max, gap_ratio: values[n - 2] / lambda_max })
}

/// Spectral norm of an arbitrary (possibly rectangular) matrix.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = if a.nrows() >= a.ncols() { a.adjoint() * a } else { a * a.adjoint() };
    let values = eigenvalues_hermitian(&gram).expect("Gram matrix is square and finite");
    values[0].max(0.0).sqrt()
}

/// Evaluates the sin-θ bound for the bottom eigenvector of `A` under perturbation `E`.
pub fn davis_kahan_check(a: &CMatrix, e: &CMatrix) -> Result<DavisKahanReport> {
    check_square_finite(a)?;
    check_square_finite(e)?;
    if a.nrows() != e.nrows() || a.nrows() < 2 {
        return Err(Error::dim("A and E must be square, equal-sized and at least 2x2"));
    }
    let base = smallest_dense(a, EigenMethod::Auto)?;
    let perturbed = smallest_dense(&(a + e), EigenMethod::Auto)?;
    let gap = base.second.expect("dimension >= 2") - base.value;
    let e_sym = symmetrize(e);
    let e_norm = operator_norm(&eigenvalues_hermitian(&e_sym)?);
    let lhs = unit_sin_angle(&base.vector, &perturbed.vector);
    let eq = (&e_sym * &base.vector).norm();
    let rhs = if gap > 0.0 {
        4.0 * eq / gap
    } else if eq == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(DavisKahanReport { premise_holds: gap > 0.0 && e_norm <= gap / 5.0, lhs, rhs, gap, e_norm })
}
