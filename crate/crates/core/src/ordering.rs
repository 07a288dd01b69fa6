//! The order `K ≤ L` on kernels and the Radon–Nikodym operator `T = dK/dL`.
//!
//! `T` lives on the ambient space of the eigen factor system of the `L` Gram,
//! which is the minimal space spanned by the `L` kernel sections. On that space
//! `T` is unique and satisfies `K(s_i, s_j) = V_L(s_i)* T V_L(s_j)`.

use crate::error::{Error, Result};
use crate::kernels::BlockGram;
use crate::numerics::{self, psd_sqrt, CMatrix, HermitianMatrix, DEFAULT_PSD_TOL, DEFAULT_RANK_TOL};
use crate::rkhs::{factorize, FactorMode, FactorSystem, RkhsElement};

/// Allowed excursion of the eigenvalues of `T` outside `[0, 1]` before clamping.
pub const RN_SPECTRUM_TOL: f64 = 1e-8;
/// Relative threshold on `‖G_K − P G_K P‖_max`.
pub const RANGE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderVerdict {
    pub holds: bool,
    /// Smallest eigenvalue of `G_L − G_K`.
    pub min_eigenvalue: f64,
}

/// `K ≤ L` on the sample points: `G_L − G_K` is PSD.
pub fn check_order(gk: &BlockGram, gl: &BlockGram, tol: f64) -> Result<OrderVerdict> {
    gk.same_shape(gl)?;
    let diff = gl.hermitian().sub(gk.hermitian())?;
    let v = numerics::psd_check(&diff, tol);
    Ok(OrderVerdict {
        holds: v.is_psd,
        min_eigenvalue: v.min_eigenvalue,
    })
}

/// `0 ≤ T ≤ I` on the ambient space of the `L` factor system.
#[derive(Debug, Clone)]
pub struct RnOperator {
    t: HermitianMatrix,
    range_projector: HermitianMatrix,
    residual: f64,
}

impl RnOperator {
    /// Validates `0 ≤ T ≤ I` up to [`RN_SPECTRUM_TOL`] and clamps the spectrum.
    pub fn new(t: HermitianMatrix, range_projector: HermitianMatrix, residual: f64) -> Result<Self> {
        let eig = t.eigen();
        let (lo, hi) = (eig.min_eigenvalue(), eig.max_eigenvalue());
        if t.dim() > 0 && (lo < -RN_SPECTRUM_TOL || hi > 1.0 + RN_SPECTRUM_TOL) {
            return Err(Error::OrderViolated(format!(
                "T has spectrum in [{lo:e}, {hi}], outside [0, 1]"
            )));
        }
        let t = if t.dim() > 0 && (lo < 0.0 || hi > 1.0) {
            eig.map(|l| l.clamp(0.0, 1.0))
        } else {
            t
        };
        Ok(Self {
            t,
            range_projector,
            residual,
        })
    }

    /// `T` itself.
    pub fn operator(&self) -> &HermitianMatrix {
        &self.t
    }

    /// Projector onto the range of the `L` Gram (`nh × nh`).
    pub fn range_projector(&self) -> &HermitianMatrix {
        &self.range_projector
    }

    /// `‖G_K − P G_K P‖_max`.
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

/// Computes `T = (F_L*)⁺ G_K F_L⁺` with `F_L` the eigen factor of `G_L`.
pub fn rn_operator(gk: &BlockGram, gl: &BlockGram) -> Result<RnOperator> {
    gk.same_shape(gl)?;
    let verdict = check_order(gk, gl, DEFAULT_PSD_TOL)?;
    if !verdict.holds {
        return Err(Error::OrderViolated(format!(
            "G_L − G_K has eigenvalue {:e}",
            verdict.min_eigenvalue
        )));
    }
    let factors_l = factorize(gl, FactorMode::Eigen)?;
    rn_operator_with_factor(gk, &factors_l)
}

/// Same as [`rn_operator`], expressed on the ambient space of a given factor
/// system of `G_L`. The order itself is not re-checked.
pub fn rn_operator_with_factor(gk: &BlockGram, factors_l: &FactorSystem) -> Result<RnOperator> {
    if factors_l.stacked().ncols() != gk.dim() || factors_l.h() != gk.h() {
        return Err(Error::DimensionMismatch(format!(
            "factor system covers {} columns, K Gram has {}",
            factors_l.stacked().ncols(),
            gk.dim()
        )));
    }
    let f_pinv = factors_l.pseudo_inverse();
    let t = HermitianMatrix::hermitize(&(f_pinv.adjoint() * gk.matrix() * &f_pinv))?;
    let projector = HermitianMatrix::hermitize(&(&f_pinv * factors_l.stacked()))?;
    let p = projector.matrix();
    let residual = numerics::max_abs(&(gk.matrix() - p * gk.matrix() * p));
    let threshold = RANGE_TOL * gk.hermitian().norm2();
    if residual > threshold {
        return Err(Error::RangeIncompatible { residual, threshold });
    }
    RnOperator::new(t, projector, residual)
}

/// Both routes to `K(s_i, s_j)` from `T`.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// `V_L(s_i)* T V_L(s_j)`.
    pub direct: CMatrix,
    /// `(T^{1/2} V_L(s_i))* (T^{1/2} V_L(s_j))`.
    pub via_root: CMatrix,
}

/// `V_L(s_i)* T V_L(s_j)`.
pub fn reconstruct_from_t(factors_l: &FactorSystem, t: &RnOperator, i: usize, j: usize) -> Result<CMatrix> {
    Ok(reconstruct_both(factors_l, t, i, j)?.direct)
}

pub fn reconstruct_both(factors_l: &FactorSystem, t: &RnOperator, i: usize, j: usize) -> Result<Reconstruction> {
    let tm = t.operator();
    if tm.dim() != factors_l.rank() {
        return Err(Error::DimensionMismatch(format!(
            "T acts on dimension {}, factor system has r = {}",
            tm.dim(),
            factors_l.rank()
        )));
    }
    let vi = factors_l.factor(i)?;
    let vj = factors_l.factor(j)?;
    let direct = vi.adjoint() * tm.matrix() * &vj;
    let root = psd_sqrt(tm, DEFAULT_PSD_TOL)?;
    let ri = root.matrix() * &vi;
    let rj = root.matrix() * &vj;
    Ok(Reconstruction {
        direct,
        via_root: ri.adjoint() * rj,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AronszajnNorms {
    pub norm_k: f64,
    pub norm_l: f64,
}

/// Norms of `f = Σ c K̃-sections of K` in `H_K̃` and in `H_L̃`.
///
/// The `H_L̃` norm is that of the minimal-norm element of the `L` span with the
/// same sample values `G_K c`.
pub fn aronszajn_norms(c: &RkhsElement, gk: &BlockGram, gl: &BlockGram) -> Result<AronszajnNorms> {
    let verdict = check_order(gk, gl, DEFAULT_PSD_TOL)?;
    if !verdict.holds {
        return Err(Error::OrderViolated(format!(
            "G_L − G_K has eigenvalue {:e}",
            verdict.min_eigenvalue
        )));
    }
    if c.coefficients.len() != gk.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients, expected {}",
            c.coefficients.len(),
            gk.dim()
        )));
    }
    let values = gk.matrix() * &c.coefficients;
    let norm_k_sq = c.coefficients.dotc(&values).re.max(0.0);
    let gl_pinv = numerics::pinv(gl.hermitian(), DEFAULT_RANK_TOL).pseudo_inverse;
    let norm_l_sq = values.dotc(&(gl_pinv.matrix() * &values)).re.max(0.0);
    Ok(AronszajnNorms {
        norm_k: norm_k_sq.sqrt(),
        norm_l: norm_l_sq.sqrt(),
    })
}
