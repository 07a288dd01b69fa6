//! Finite-sample universal factorization `K(s, t) = V(s)* V(t)`.
//!
//! A [`FactorSystem`] stacks the factors column-wise into `F = [V(s_0) … V(s_{n−1})]`
//! so that `F* F` is the block Gram. Column `i·h + a` of `F` is the kernel
//! section `K̃_{(s_i, e_a)}` written in an orthonormal basis of its span.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::BlockGram;
use crate::numerics::{
    self, pinv_general, pivoted_cholesky_factor, CMatrix, CVector, DEFAULT_PSD_TOL, DEFAULT_RANK_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorMode {
    /// `F = Λ^{1/2} U*` over the numerical range; `r` equals the rank.
    Eigen,
    /// Pivoted Cholesky; `r = nh` with zero rows past the rank.
    Cholesky,
}

#[derive(Debug, Clone)]
struct RangeSpectrum {
    basis: CMatrix,
    values: Vec<f64>,
}

/// Factors `V(s_i): C^h → C^r` with `V(s_i)* V(s_j) = K(s_i, s_j)`.
#[derive(Debug, Clone)]
pub struct FactorSystem {
    h: usize,
    stacked: CMatrix,
    mode: Option<FactorMode>,
    spectrum: Option<RangeSpectrum>,
}

impl FactorSystem {
    /// Wraps user-supplied factors, each `r × h`.
    pub fn from_factors(factors: &[CMatrix]) -> Result<Self> {
        let first = factors.first().ok_or(Error::Empty("no factors"))?;
        let (r, h) = first.shape();
        let mut stacked = CMatrix::zeros(r, factors.len() * h);
        for (i, v) in factors.iter().enumerate() {
            if v.shape() != (r, h) {
                return Err(Error::DimensionMismatch(format!(
                    "factor {i} is {}x{}, expected {r}x{h}",
                    v.nrows(),
                    v.ncols()
                )));
            }
            stacked.view_mut((0, i * h), (r, h)).copy_from(v);
        }
        Ok(Self {
            h,
            stacked,
            mode: None,
            spectrum: None,
        })
    }

    /// Ambient dimension `r`.
    pub fn rank(&self) -> usize {
        self.stacked.nrows()
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn n_points(&self) -> usize {
        if self.h == 0 {
            0
        } else {
            self.stacked.ncols() / self.h
        }
    }

    pub fn mode(&self) -> Option<FactorMode> {
        self.mode
    }

    /// `r × nh` matrix of stacked factors.
    pub fn stacked(&self) -> &CMatrix {
        &self.stacked
    }

    pub fn factor(&self, i: usize) -> Result<CMatrix> {
        if i >= self.n_points() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n_points(),
            });
        }
        Ok(self.stacked.columns(i * self.h, self.h).into_owned())
    }

    pub fn factors(&self) -> Vec<CMatrix> {
        (0..self.n_points())
            .map(|i| self.stacked.columns(i * self.h, self.h).into_owned())
            .collect()
    }

    /// `F* F`.
    pub fn reconstruct(&self) -> CMatrix {
        self.stacked.adjoint() * &self.stacked
    }

    /// `max_{i,j} ‖V(s_i)* V(s_j) − G_ij‖_max`.
    pub fn reconstruction_error(&self, gram: &BlockGram) -> Result<f64> {
        if self.stacked.ncols() != gram.dim() || self.h != gram.h() {
            return Err(Error::DimensionMismatch(format!(
                "factor system covers {} columns, Gram has {}",
                self.stacked.ncols(),
                gram.dim()
            )));
        }
        Ok(numerics::max_abs(&(self.reconstruct() - gram.matrix())))
    }

    /// Dimension of the span of all factor columns.
    pub fn span_rank(&self) -> usize {
        numerics::numerical_rank(&self.stacked, DEFAULT_RANK_TOL.sqrt())
    }

    /// Moore–Penrose inverse of the stacked factor (`nh × r`).
    pub fn pseudo_inverse(&self) -> CMatrix {
        match &self.spectrum {
            Some(spec) => {
                let mut out = spec.basis.clone();
                for (k, &l) in spec.values.iter().enumerate() {
                    let s = 1.0 / l.sqrt();
                    out.column_mut(k).iter_mut().for_each(|z| *z *= s);
                }
                out
            }
            None => pinv_general(&self.stacked, DEFAULT_RANK_TOL.sqrt()),
        }
    }

    /// Returns a system with every factor replaced by `M · V(s_i)`.
    pub fn left_multiplied(&self, m: &CMatrix) -> Result<Self> {
        if m.ncols() != self.rank() {
            return Err(Error::DimensionMismatch(format!(
                "operator has {} columns, ambient dimension is {}",
                m.ncols(),
                self.rank()
            )));
        }
        Ok(Self {
            h: self.h,
            stacked: m * &self.stacked,
            mode: None,
            spectrum: None,
        })
    }
}

/// Factors a PSD block Gram.
pub fn factorize(gram: &BlockGram, mode: FactorMode) -> Result<FactorSystem> {
    let eig = gram.hermitian().eigen();
    let verdict = numerics::verdict_from(&eig, DEFAULT_PSD_TOL);
    if !verdict.is_psd {
        return Err(Error::NotPsd {
            min_eigenvalue: verdict.min_eigenvalue,
        });
    }
    match mode {
        FactorMode::Eigen => {
            let r = eig.rank();
            let basis = eig.range_basis();
            let values: Vec<f64> = eig.eigenvalues[..r].to_vec();
            let mut stacked = basis.adjoint();
            for (k, &l) in values.iter().enumerate() {
                let s = l.sqrt();
                stacked.row_mut(k).iter_mut().for_each(|z| *z *= s);
            }
            Ok(FactorSystem {
                h: gram.h(),
                stacked,
                mode: Some(mode),
                spectrum: Some(RangeSpectrum { basis, values }),
            })
        }
        FactorMode::Cholesky => {
            let (stacked, _) = pivoted_cholesky_factor(gram.hermitian(), DEFAULT_RANK_TOL);
            Ok(FactorSystem {
                h: gram.h(),
                stacked,
                mode: Some(mode),
                spectrum: None,
            })
        }
    }
}

/// `f = Σ c_{(i,a)} K̃_{(s_i, e_a)}`, stored by its coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsElement {
    pub coefficients: CVector,
}

impl RkhsElement {
    pub fn new(coefficients: CVector) -> Self {
        Self { coefficients }
    }

    pub fn zero(len: usize) -> Self {
        Self {
            coefficients: CVector::zeros(len),
        }
    }

    /// The kernel section `K̃_{(s_i, a)}`; it is linear in `a`.
    pub fn section(gram: &BlockGram, i: usize, a: &CVector) -> Result<Self> {
        check_point(gram, i)?;
        check_h_vector(gram, a)?;
        let mut c = CVector::zeros(gram.dim());
        c.rows_mut(i * gram.h(), gram.h()).copy_from(a);
        Ok(Self { coefficients: c })
    }
}

fn check_point(gram: &BlockGram, i: usize) -> Result<()> {
    if i >= gram.n() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: gram.n(),
        });
    }
    Ok(())
}

fn check_h_vector(gram: &BlockGram, a: &CVector) -> Result<()> {
    if a.len() != gram.h() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {}, expected {}",
            a.len(),
            gram.h()
        )));
    }
    Ok(())
}

fn check_element(gram: &BlockGram, f: &RkhsElement) -> Result<()> {
    if f.coefficients.len() != gram.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients, expected {}",
            f.coefficients.len(),
            gram.dim()
        )));
    }
    Ok(())
}

/// `⟨f, g⟩ = c* G d`.
pub fn rkhs_inner(f: &RkhsElement, g: &RkhsElement, gram: &BlockGram) -> Result<Complex64> {
    check_element(gram, f)?;
    check_element(gram, g)?;
    Ok(f.coefficients.dotc(&(gram.matrix() * &g.coefficients)))
}

/// `f(s_i, a) = Σ_j ⟨a, K(s_i, s_j) c_j⟩`, evaluated block by block.
pub fn reproducing_eval(f: &RkhsElement, i: usize, a: &CVector, gram: &BlockGram) -> Result<Complex64> {
    check_point(gram, i)?;
    check_h_vector(gram, a)?;
    check_element(gram, f)?;
    let h = gram.h();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..gram.n() {
        let cj = f.coefficients.rows(j * h, h);
        acc += a.dotc(&(gram.block(i, j) * cj));
    }
    Ok(acc)
}

/// Unitary relating two factorizations of the same Gram.
#[derive(Debug, Clone)]
pub struct Intertwiner {
    /// `r₂ × r₁`, maps the span of the first system onto the span of the second.
    pub unitary: CMatrix,
    /// `max_i ‖U V₁(s_i) − V₂(s_i)‖_max`.
    pub intertwining_defect: f64,
    /// `‖U* U − P₁‖_max` where `P₁` projects onto the span of the first system.
    pub isometry_defect: f64,
}

/// `U = F₂ F₁⁺`. Fails when the systems factor different Grams.
pub fn compute_intertwiner(f1: &FactorSystem, f2: &FactorSystem) -> Result<Intertwiner> {
    if f1.h() != f2.h() || f1.stacked().ncols() != f2.stacked().ncols() {
        return Err(Error::DimensionMismatch(format!(
            "factor systems over (n={}, h={}) and (n={}, h={})",
            f1.n_points(),
            f1.h(),
            f2.n_points(),
            f2.h()
        )));
    }
    let g1 = f1.reconstruct();
    let g2 = f2.reconstruct();
    let scale = 1.0 + numerics::spectral_norm(&g1);
    let mismatch = numerics::max_abs(&(&g1 - &g2));
    if mismatch > 1e-10 * scale {
        return Err(Error::GramMismatch { mismatch });
    }
    let f1_pinv = f1.pseudo_inverse();
    let unitary = f2.stacked() * &f1_pinv;
    let intertwining_defect = numerics::max_abs(&(&unitary * f1.stacked() - f2.stacked()));
    let projector = f1.stacked() * &f1_pinv;
    let isometry_defect = numerics::max_abs(&(unitary.adjoint() * &unitary - projector));
    Ok(Intertwiner {
        unitary,
        intertwining_defect,
        isometry_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{assemble_block_gram, OperatorKernel, SamplePoint, ScalarKernel};
    use crate::numerics::{real_diag, HermitianMatrix};
    use approx::assert_abs_diff_eq;

    const Q: f64 = 0.6065306597126334;

    fn fixture_a_gram() -> BlockGram {
        let k = OperatorKernel::scalar_times(ScalarKernel::Gaussian { width: 1.0 }, HermitianMatrix::identity(2))
            .unwrap();
        assemble_block_gram(&k, &[SamplePoint::scalar(0.0), SamplePoint::scalar(1.0)]).unwrap()
    }

    fn e(h: usize, a: usize) -> CVector {
        let mut v = CVector::zeros(h);
        v[a] = Complex64::new(1.0, 0.0);
        v
    }

    #[test]
    fn factorize_fixture_a_both_modes() {
        let g = fixture_a_gram();
        for mode in [FactorMode::Eigen, FactorMode::Cholesky] {
            let f = factorize(&g, mode).unwrap();
            let v0 = f.factor(0).unwrap();
            let v1 = f.factor(1).unwrap();
            assert!(numerics::max_abs(&(v0.adjoint() * &v0 - CMatrix::identity(2, 2))) < 1e-14);
            assert!(numerics::max_abs(&(v0.adjoint() * &v1 - real_diag(&[Q, Q]))) < 1e-14);
            assert!(f.reconstruction_error(&g).unwrap() < 1e-14);
        }
        assert_eq!(factorize(&g, FactorMode::Eigen).unwrap().rank(), 4);
        assert_eq!(factorize(&g, FactorMode::Cholesky).unwrap().rank(), 4);
    }

    #[test]
    fn factorize_fixture_b_is_minimal() {
        let k = OperatorKernel::explicit_factor(vec![real_diag(&[1.0, 0.0]), real_diag(&[0.0, 1.0])]).unwrap();
        let g = assemble_block_gram(&k, &[SamplePoint::index(0), SamplePoint::index(1)]).unwrap();
        let f = factorize(&g, FactorMode::Eigen).unwrap();
        assert_eq!(f.rank(), 2);
        assert_eq!(f.span_rank(), 2);
        assert!(f.reconstruction_error(&g).unwrap() < 1e-15);
        let c = factorize(&g, FactorMode::Cholesky).unwrap();
        assert_eq!(c.rank(), 4);
        assert!(c.reconstruction_error(&g).unwrap() < 1e-15);
    }

    #[test]
    fn single_point_identity_gives_unitary_factor() {
        let g = BlockGram::from_matrix(1, 2, HermitianMatrix::identity(2)).unwrap();
        let f = factorize(&g, FactorMode::Eigen).unwrap();
        let v = f.factor(0).unwrap();
        assert!(numerics::max_abs(&(v.adjoint() * &v - CMatrix::identity(2, 2))) < 1e-15);
        assert!(numerics::max_abs(&(&v * v.adjoint() - CMatrix::identity(2, 2))) < 1e-15);
    }

    #[test]
    fn factorize_rejects_indefinite() {
        let g = BlockGram::from_matrix(1, 2, HermitianMatrix::from_real_diagonal(&[1.0, -1.0])).unwrap();
        assert!(matches!(factorize(&g, FactorMode::Eigen), Err(Error::NotPsd { .. })));
        assert!(matches!(factorize(&g, FactorMode::Cholesky), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn inner_product_examples() {
        let id = BlockGram::from_matrix(2, 2, HermitianMatrix::identity(4)).unwrap();
        let f = RkhsElement::section(&id, 0, &e(2, 0)).unwrap();
        assert_abs_diff_eq!(rkhs_inner(&f, &f, &id).unwrap().re, 1.0);

        let g = fixture_a_gram();
        let f = RkhsElement::section(&g, 0, &e(2, 0)).unwrap();
        let h = RkhsElement::section(&g, 1, &e(2, 0)).unwrap();
        assert_abs_diff_eq!(rkhs_inner(&f, &h, &g).unwrap().re, Q, epsilon = 1e-15);
        assert!(matches!(
            rkhs_inner(&RkhsElement::zero(3), &f, &g),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn reproducing_examples() {
        let g = fixture_a_gram();
        let f = RkhsElement::section(&g, 0, &e(2, 0)).unwrap();
        assert_abs_diff_eq!(reproducing_eval(&f, 0, &e(2, 0), &g).unwrap().re, 1.0, epsilon = 1e-15);
        let f1 = RkhsElement::section(&g, 1, &e(2, 0)).unwrap();
        assert_abs_diff_eq!(reproducing_eval(&f1, 0, &e(2, 0), &g).unwrap().re, Q, epsilon = 1e-15);
        let z = RkhsElement::zero(4);
        for i in 0..2 {
            for a in 0..2 {
                assert_eq!(reproducing_eval(&z, i, &e(2, a), &g).unwrap(), Complex64::new(0.0, 0.0));
            }
        }
        assert!(matches!(
            reproducing_eval(&f, 2, &e(2, 0), &g),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn intertwiner_examples() {
        let g = fixture_a_gram();
        let fe = factorize(&g, FactorMode::Eigen).unwrap();
        let same = compute_intertwiner(&fe, &fe).unwrap();
        assert!(numerics::max_abs(&(same.unitary - CMatrix::identity(4, 4))) < 1e-14);

        let fc = factorize(&g, FactorMode::Cholesky).unwrap();
        let u = compute_intertwiner(&fe, &fc).unwrap();
        assert!(u.intertwining_defect <= 1e-9);
        assert!(u.isometry_defect <= 1e-9);

        let plus = FactorSystem::from_factors(&[real_diag(&[2.0])]).unwrap();
        let minus = FactorSystem::from_factors(&[real_diag(&[-2.0])]).unwrap();
        let u = compute_intertwiner(&plus, &minus).unwrap();
        assert_abs_diff_eq!(u.unitary[(0, 0)].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.unitary[(0, 0)].im, 0.0);
    }

    #[test]
    fn intertwiner_rejects_different_grams() {
        let a = FactorSystem::from_factors(&[real_diag(&[2.0])]).unwrap();
        let b = FactorSystem::from_factors(&[real_diag(&[3.0])]).unwrap();
        assert!(matches!(compute_intertwiner(&a, &b), Err(Error::GramMismatch { .. })));
    }
}
