//! Dense Hermitian linear algebra shared by the rest of the crate.
//!
//! Eigendecompositions come from `nalgebra`'s symmetric eigensolver, which
//! handles complex Hermitian input. Everything here is a pure function of its
//! inputs.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative tolerance for positive semidefiniteness checks.
pub const DEFAULT_PSD_TOL: f64 = 1e-10;
/// Eigenvalues at or below `DEFAULT_RANK_TOL * λ_max` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A square complex matrix that equals its conjugate transpose exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    matrix: CMatrix,
    defect: f64,
    symmetrized: bool,
}

impl HermitianMatrix {
    /// Replaces `m` by `(m + m*) / 2` and records `‖m − m*‖_max`.
    pub fn hermitize(m: &CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let n = m.nrows();
        let mut out = CMatrix::zeros(n, n);
        let mut defect = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let a = m[(i, j)];
                let b = m[(j, i)].conj();
                defect = defect.max((a - b).norm());
                out[(i, j)] = (a + b) * 0.5;
            }
        }
        Ok(Self {
            matrix: out,
            defect,
            symmetrized: true,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: CMatrix::identity(n, n),
            defect: 0.0,
            symmetrized: false,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            matrix: CMatrix::zeros(n, n),
            defect: 0.0,
            symmetrized: false,
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        Self {
            matrix: m,
            defect: 0.0,
            symmetrized: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Hermiticity defect of the matrix this value was built from.
    pub fn defect(&self) -> f64 {
        self.defect
    }

    pub fn is_symmetrized(&self) -> bool {
        self.symmetrized
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: self.matrix.map(|z| z * factor),
            defect: 0.0,
            symmetrized: self.symmetrized,
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.dim(),
                self.dim(),
                other.dim(),
                other.dim()
            )));
        }
        Self::hermitize(&(&self.matrix - &other.matrix))
    }

    pub fn eigen(&self) -> SpectralDecomposition {
        SpectralDecomposition::new(self, DEFAULT_RANK_TOL)
    }

    pub fn eigen_with_tol(&self, rank_tol: f64) -> SpectralDecomposition {
        SpectralDecomposition::new(self, rank_tol)
    }

    /// Spectral norm (largest eigenvalue magnitude).
    pub fn norm2(&self) -> f64 {
        self.eigen().max_abs_eigenvalue()
    }

    fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.matrix[(i, j)] == ZERO))
    }
}

/// Eigendecomposition `M = U diag(λ) U*` with eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
    pub rank_tol: f64,
}

impl SpectralDecomposition {
    pub fn new(m: &HermitianMatrix, rank_tol: f64) -> Self {
        let n = m.dim();
        if n == 0 {
            return Self {
                eigenvalues: Vec::new(),
                eigenvectors: CMatrix::zeros(0, 0),
                rank_tol,
            };
        }
        let eig = SymmetricEigen::new(m.matrix().clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut eigenvectors = CMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Self {
            eigenvalues,
            eigenvectors,
            rank_tol,
        }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.max_eigenvalue()
            .abs()
            .max(self.min_eigenvalue().abs())
    }

    pub fn rank_threshold(&self) -> f64 {
        self.rank_tol * self.max_eigenvalue().max(0.0)
    }

    /// Number of eigenvalues strictly above `rank_tol · max(λ_max, 0)`.
    pub fn rank(&self) -> usize {
        let cut = self.rank_threshold();
        self.eigenvalues.iter().take_while(|&&l| l > cut).count()
    }

    /// Columns of the eigenvector matrix spanning the numerical range.
    pub fn range_basis(&self) -> CMatrix {
        self.eigenvectors.columns(0, self.rank()).into_owned()
    }

    /// `U f(Λ) U*` for a real spectral function `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let n = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            let v = f(l);
            scaled.column_mut(k).iter_mut().for_each(|z| *z *= v);
        }
        let m = &scaled * self.eigenvectors.adjoint();
        let mut out = HermitianMatrix::hermitize(&m).expect("square by construction");
        out.defect = 0.0;
        debug_assert_eq!(out.dim(), n);
        out
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        self.map(|l| l)
    }
}

/// Outcome of a positive semidefiniteness test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdVerdict {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

/// `M` passes when `λ_min ≥ −tol · (1 + max |λ|)`.
pub fn psd_check(m: &HermitianMatrix, tol: f64) -> PsdVerdict {
    verdict_from(&m.eigen(), tol)
}

pub(crate) fn verdict_from(eig: &SpectralDecomposition, tol: f64) -> PsdVerdict {
    let min = eig.min_eigenvalue();
    PsdVerdict {
        is_psd: min >= -tol * (1.0 + eig.max_abs_eigenvalue()),
        min_eigenvalue: min,
    }
}

/// Positive square root. Eigenvalues in `[−tol · scale, 0)` are clamped to zero.
pub fn psd_sqrt(m: &HermitianMatrix, tol: f64) -> Result<HermitianMatrix> {
    if m.is_diagonal() {
        let n = m.dim();
        let diag: Vec<f64> = (0..n).map(|i| m.matrix()[(i, i)].re).collect();
        let scale = 1.0 + diag.iter().fold(0.0_f64, |a, d| a.max(d.abs()));
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if n > 0 && min < -tol * scale {
            return Err(Error::NotPsd {
                min_eigenvalue: min,
            });
        }
        let roots: Vec<f64> = diag.iter().map(|d| d.max(0.0).sqrt()).collect();
        return Ok(HermitianMatrix::from_real_diagonal(&roots));
    }
    let eig = m.eigen();
    let verdict = verdict_from(&eig, tol);
    if !verdict.is_psd {
        return Err(Error::NotPsd {
            min_eigenvalue: verdict.min_eigenvalue,
        });
    }
    Ok(eig.map(|l| l.max(0.0).sqrt()))
}

#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub pseudo_inverse: HermitianMatrix,
    pub range_projector: HermitianMatrix,
    pub rank: usize,
}

/// Spectral pseudo-inverse of a PSD matrix and the projector onto its range.
pub fn pinv(m: &HermitianMatrix, rank_tol: f64) -> PseudoInverse {
    let eig = m.eigen_with_tol(rank_tol);
    let cut = eig.rank_threshold();
    let pseudo_inverse = eig.map(|l| if l > cut { 1.0 / l } else { 0.0 });
    let range_projector = eig.map(|l| if l > cut { 1.0 } else { 0.0 });
    PseudoInverse {
        pseudo_inverse,
        range_projector,
        rank: eig.rank(),
    }
}

/// Moore–Penrose inverse of a general (rectangular) matrix via SVD.
/// Singular values at or below `rel_tol · σ_max` are dropped.
pub fn pinv_general(m: &CMatrix, rel_tol: f64) -> CMatrix {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return CMatrix::zeros(cols, rows);
    }
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V*");
    let smax = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    let cut = rel_tol * smax;
    let mut out = CMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            let vk = vt.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (vk * uk) * Complex64::new(1.0 / s, 0.0);
        }
    }
    out
}

/// Numerical rank of a general matrix: singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: &CMatrix, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let s = SVD::new(m.clone(), false, false).singular_values;
    let smax = s.iter().copied().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * smax).count()
}

/// Pivoted Cholesky factor `F` (`n × n`, rows past the numerical rank zero)
/// with `F* F ≈ M`. Pivoting stops once every remaining Schur-complement
/// diagonal is at or below `rank_tol · max_i M_ii`.
pub fn pivoted_cholesky_factor(m: &HermitianMatrix, rank_tol: f64) -> (CMatrix, usize) {
    let n = m.dim();
    let mut work = m.matrix().clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut lower = CMatrix::zeros(n, n);
    let max_diag = (0..n).map(|i| work[(i, i)].re).fold(0.0_f64, f64::max);
    let stop = rank_tol * max_diag;
    let mut rank = 0;
    for k in 0..n {
        let (p, d) = (k..n)
            .map(|i| (i, work[(i, i)].re))
            .fold((k, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        if !(d > stop) || d <= 0.0 {
            break;
        }
        if p != k {
            work.swap_rows(k, p);
            work.swap_columns(k, p);
            lower.swap_rows(k, p);
            perm.swap(k, p);
        }
        let pivot = d.sqrt();
        lower[(k, k)] = Complex64::new(pivot, 0.0);
        for i in k + 1..n {
            lower[(i, k)] = work[(i, k)] / pivot;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let update = lower[(i, k)] * lower[(j, k)].conj();
                work[(i, j)] -= update;
            }
        }
        rank += 1;
    }
    // F[k, perm[i]] = conj(L[i, k])
    let mut factor = CMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..rank {
            factor[(k, perm[i])] = lower[(i, k)].conj();
        }
    }
    (factor, rank)
}

/// `‖M‖_max`, the largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0_f64, f64::max)
}

pub fn real_diag(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(values[i], 0.0)
        } else {
            ZERO
        }
    })
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// `d × d` matrix unit `E_ij`.
pub fn matrix_unit(d: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(i, j)] = ONE;
    m
}
