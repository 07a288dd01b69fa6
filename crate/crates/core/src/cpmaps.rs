//! Completely positive maps `ψ: M_d → M_h` stored as Choi matrices.
//!
//! The Choi matrix is the `dh × dh` block matrix whose block `(i, j)` is
//! `ψ(E_ij)`; entry `(i·h + a, j·h + b)` is `ψ(E_ij)_{ab}`.
//!
//! The kernel `K(A, B) = ψ(A* B)` is sampled on the matrix units, ordered
//! `E_ij ↦ i·d + j`. Since `E_ij* E_kl = δ_ik E_jl`, its block Gram is
//! `I_d ⊗ Choi(ψ)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gaussian::{sample_gp, GaussianDraw, OnbMode};
use crate::kernels::{assemble_block_gram, BlockGram, OperatorKernel, SamplePoint};
use crate::numerics::{
    self, matrix_unit, psd_sqrt, CMatrix, HermitianMatrix, PsdVerdict, DEFAULT_PSD_TOL, DEFAULT_RANK_TOL,
};
use crate::ordering::{check_order, rn_operator_with_factor};
use crate::rkhs::{factorize, FactorMode, FactorSystem};

/// Linear map `M_d → M_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpMap {
    d: usize,
    h: usize,
    choi: HermitianMatrix,
}

impl CpMap {
    /// Builds a map from its Choi matrix. The map must preserve Hermiticity,
    /// i.e. the Choi matrix must be Hermitian.
    pub fn new(d: usize, h: usize, choi: &CMatrix) -> Result<Self> {
        if d == 0 || h == 0 {
            return Err(Error::InvalidParameter("d and h must be positive".into()));
        }
        if choi.shape() != (d * h, d * h) {
            return Err(Error::DimensionMismatch(format!(
                "Choi matrix is {}x{}, expected {}x{}",
                choi.nrows(),
                choi.ncols(),
                d * h,
                d * h
            )));
        }
        let herm = HermitianMatrix::hermitize(choi)?;
        if herm.defect() > 1e-10 * (1.0 + numerics::max_abs(choi)) {
            return Err(Error::InvalidParameter(format!(
                "Choi matrix is not Hermitian (defect {:e})",
                herm.defect()
            )));
        }
        Ok(Self { d, h, choi: herm })
    }

    /// `ψ(A) = Σ_k V_k A V_k*` for `h × d` Kraus operators.
    pub fn from_kraus(d: usize, h: usize, ops: &[CMatrix]) -> Result<Self> {
        if let Some(bad) = ops.iter().find(|v| v.shape() != (h, d)) {
            return Err(Error::DimensionMismatch(format!(
                "Kraus operator is {}x{}, expected {h}x{d}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        Self::from_fn(d, h, |a| {
            let mut out = CMatrix::zeros(h, h);
            for v in ops {
                out += v * a * v.adjoint();
            }
            out
        })
    }

    /// Tabulates `f` on the matrix units.
    pub fn from_fn(d: usize, h: usize, f: impl Fn(&CMatrix) -> CMatrix) -> Result<Self> {
        let mut choi = CMatrix::zeros(d * h, d * h);
        for i in 0..d {
            for j in 0..d {
                let block = f(&matrix_unit(d, i, j));
                if block.shape() != (h, h) {
                    return Err(Error::DimensionMismatch(format!(
                        "map returned {}x{}, expected {h}x{h}",
                        block.nrows(),
                        block.ncols()
                    )));
                }
                choi.view_mut((i * h, j * h), (h, h)).copy_from(&block);
            }
        }
        Self::new(d, h, &choi)
    }

    pub fn identity(d: usize) -> Self {
        Self::from_fn(d, d, |a| a.clone()).expect("identity channel")
    }

    /// `ψ(A) = Tr(A) I / d`.
    pub fn depolarizing(d: usize) -> Self {
        Self::from_fn(d, d, |a| CMatrix::identity(d, d) * (a.trace() / d as f64)).expect("depolarizing channel")
    }

    /// `ψ(A) = Aᵀ`, positive but not completely positive for `d ≥ 2`.
    pub fn transpose(d: usize) -> Self {
        Self::from_fn(d, d, |a| a.transpose()).expect("transpose map")
    }

    pub fn zero(d: usize, h: usize) -> Self {
        Self::new(d, h, &CMatrix::zeros(d * h, d * h)).expect("zero map")
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            d: self.d,
            h: self.h,
            choi: self.choi.scaled(factor),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn choi(&self) -> &HermitianMatrix {
        &self.choi
    }

    /// `ψ(E_ij)`.
    pub fn unit_image(&self, i: usize, j: usize) -> CMatrix {
        self.choi
            .matrix()
            .view((i * self.h, j * self.h), (self.h, self.h))
            .into_owned()
    }

    /// `ψ(A) = Σ_ij A_ij ψ(E_ij)`.
    pub fn apply(&self, a: &CMatrix) -> Result<CMatrix> {
        if a.shape() != (self.d, self.d) {
            return Err(Error::DimensionMismatch(format!(
                "input is {}x{}, expected {}x{}",
                a.nrows(),
                a.ncols(),
                self.d,
                self.d
            )));
        }
        let mut out = CMatrix::zeros(self.h, self.h);
        for i in 0..self.d {
            for j in 0..self.d {
                let c = a[(i, j)];
                if c != Complex64::new(0.0, 0.0) {
                    out += self.unit_image(i, j) * c;
                }
            }
        }
        Ok(out)
    }

    fn same_shape(&self, other: &CpMap) -> Result<()> {
        if self.d != other.d || self.h != other.h {
            return Err(Error::DimensionMismatch(format!(
                "maps M_{} → M_{} and M_{} → M_{}",
                self.d, self.h, other.d, other.h
            )));
        }
        Ok(())
    }
}

/// Choi positivity.
pub fn is_cp(psi: &CpMap, tol: f64) -> PsdVerdict {
    numerics::psd_check(psi.choi(), tol)
}

fn require_cp(psi: &CpMap) -> Result<()> {
    let v = is_cp(psi, DEFAULT_PSD_TOL);
    if v.is_psd {
        Ok(())
    } else {
        Err(Error::NotCompletelyPositive {
            min_eigenvalue: v.min_eigenvalue,
        })
    }
}

/// Kraus operators from the Choi eigenvectors; one per nonzero eigenvalue.
pub fn kraus(psi: &CpMap, rank_tol: f64) -> Result<Vec<CMatrix>> {
    require_cp(psi)?;
    let eig = psi.choi().eigen_with_tol(rank_tol);
    let (d, h) = (psi.d, psi.h);
    Ok((0..eig.rank())
        .map(|k| {
            let s = eig.eigenvalues[k].sqrt();
            let v = eig.eigenvectors.column(k);
            CMatrix::from_fn(h, d, |a, i| v[i * h + a] * s)
        })
        .collect())
}

/// Sample points `0 … d²−1` standing for `E_ij` at index `i·d + j`.
pub fn matrix_unit_points(d: usize) -> Vec<SamplePoint> {
    (0..d * d).map(SamplePoint::index).collect()
}

fn matrix_units(d: usize) -> Vec<CMatrix> {
    (0..d * d).map(|p| matrix_unit(d, p / d, p % d)).collect()
}

fn cp_gram(psi: &CpMap) -> Result<BlockGram> {
    let kernel = OperatorKernel::cp_induced(psi.clone(), matrix_units(psi.d))?;
    assemble_block_gram(&kernel, &matrix_unit_points(psi.d))
}

/// Block Gram of `K(A, B) = ψ(A* B)` over the matrix units.
pub fn kernel_from_cp(psi: &CpMap) -> Result<BlockGram> {
    require_cp(psi)?;
    cp_gram(psi)
}

/// Minimal Stinespring dilation `ψ(A) = V* π(A) V` built on the span of the
/// kernel sections of `K(A, B) = ψ(A* B)`.
#[derive(Debug, Clone)]
pub struct StinespringDilation {
    pub d: usize,
    pub h: usize,
    pub dim_k: usize,
    /// `dim_k × h` embedding `V = V(I)`.
    pub v: CMatrix,
    /// `π(E_ij)` at index `i·d + j`.
    pub pi_units: Vec<CMatrix>,
    pub minimal: bool,
    factors: FactorSystem,
}

impl StinespringDilation {
    pub fn pi_unit(&self, i: usize, j: usize) -> &CMatrix {
        &self.pi_units[i * self.d + j]
    }

    /// Linear extension of `π` from the matrix units.
    pub fn pi(&self, a: &CMatrix) -> Result<CMatrix> {
        if a.shape() != (self.d, self.d) {
            return Err(Error::DimensionMismatch(format!(
                "input is {}x{}, expected {}x{}",
                a.nrows(),
                a.ncols(),
                self.d,
                self.d
            )));
        }
        let mut out = CMatrix::zeros(self.dim_k, self.dim_k);
        for i in 0..self.d {
            for j in 0..self.d {
                out += self.pi_unit(i, j) * a[(i, j)];
            }
        }
        Ok(out)
    }

    /// `V* π(A) V`.
    pub fn compress(&self, a: &CMatrix) -> Result<CMatrix> {
        Ok(self.v.adjoint() * self.pi(a)? * &self.v)
    }

    /// The factor system `V(E_ij)` of the CP-induced Gram.
    pub fn factors(&self) -> &FactorSystem {
        &self.factors
    }

    /// `dim span{π(A) V x}`.
    pub fn span_dimension(&self) -> usize {
        span_of_images(&self.pi_units, &self.v, self.dim_k)
    }

    /// `max_ij ‖ψ(E_ij) − V* π(E_ij) V‖_max`.
    pub fn exactness_defect(&self, psi: &CpMap) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.d {
            for j in 0..self.d {
                let c = self.v.adjoint() * self.pi_unit(i, j) * &self.v;
                worst = worst.max(numerics::max_abs(&(psi.unit_image(i, j) - c)));
            }
        }
        worst
    }

    /// `max ‖π(E_ij) π(E_kl) − δ_jk π(E_il)‖_max`.
    pub fn multiplicativity_defect(&self) -> f64 {
        let d = self.d;
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let prod = self.pi_unit(i, j) * self.pi_unit(k, l);
                        let diff = if j == k { prod - self.pi_unit(i, l) } else { prod };
                        worst = worst.max(numerics::max_abs(&diff));
                    }
                }
            }
        }
        worst
    }

    /// `max ‖π(E_ij)* − π(E_ji)‖_max`.
    pub fn adjoint_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.d {
            for j in 0..self.d {
                let diff = self.pi_unit(i, j).adjoint() - self.pi_unit(j, i);
                worst = worst.max(numerics::max_abs(&diff));
            }
        }
        worst
    }
}

fn span_of_images(pi_units: &[CMatrix], v: &CMatrix, dim: usize) -> usize {
    if dim == 0 {
        return 0;
    }
    let h = v.ncols();
    let mut cols = CMatrix::zeros(dim, pi_units.len() * h);
    for (p, pi) in pi_units.iter().enumerate() {
        cols.view_mut((0, p * h), (dim, h)).copy_from(&(pi * v));
    }
    numerics::numerical_rank(&cols, DEFAULT_RANK_TOL.sqrt())
}

/// `𝒦` = span of the kernel sections, `V x = K̃_{(I, x)}`,
/// `π(A) K̃_{(B, x)} = K̃_{(AB, x)}`.
pub fn stinespring(psi: &CpMap) -> Result<StinespringDilation> {
    let gram = kernel_from_cp(psi)?;
    let factors = factorize(&gram, FactorMode::Eigen)?;
    let (d, h) = (psi.d, psi.h);
    let dim_k = factors.rank();
    let unit_factor = |i: usize, j: usize| factors.stacked().columns((i * d + j) * h, h);

    let mut v = CMatrix::zeros(dim_k, h);
    for i in 0..d {
        v += unit_factor(i, i);
    }

    // π(E_ij) maps V(E_kl) to δ_jk V(E_il); the factor columns span 𝒦.
    let f_pinv = factors.pseudo_inverse();
    let mut pi_units = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let mut shifted = CMatrix::zeros(dim_k, d * d * h);
            for l in 0..d {
                shifted
                    .view_mut((0, (j * d + l) * h), (dim_k, h))
                    .copy_from(&unit_factor(i, l));
            }
            pi_units.push(shifted * &f_pinv);
        }
    }
    let minimal = span_of_images(&pi_units, &v, dim_k) == dim_k;
    Ok(StinespringDilation {
        d,
        h,
        dim_k,
        v,
        pi_units,
        minimal,
        factors,
    })
}

/// Dilation from Kraus operators: `𝒦 = C^d ⊗ C^r`, `π(A) = A ⊗ I_r`,
/// `W x = Σ_k V_k* x ⊗ e_k`.
#[derive(Debug, Clone)]
pub struct KrausDilation {
    pub d: usize,
    pub h: usize,
    pub r: usize,
    /// `dr × h`, row index `i·r + k`.
    pub w: CMatrix,
}

impl KrausDilation {
    pub fn from_kraus(d: usize, h: usize, ops: &[CMatrix]) -> Result<Self> {
        if let Some(bad) = ops.iter().find(|v| v.shape() != (h, d)) {
            return Err(Error::DimensionMismatch(format!(
                "Kraus operator is {}x{}, expected {h}x{d}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        let r = ops.len();
        let mut w = CMatrix::zeros(d * r, h);
        for (k, op) in ops.iter().enumerate() {
            for i in 0..d {
                for a in 0..h {
                    w[(i * r + k, a)] = op[(a, i)].conj();
                }
            }
        }
        Ok(Self { d, h, r, w })
    }

    pub fn dim(&self) -> usize {
        self.d * self.r
    }

    /// `A ⊗ I_r`.
    pub fn pi(&self, a: &CMatrix) -> CMatrix {
        a.kronecker(&CMatrix::identity(self.r, self.r))
    }

    pub fn compress(&self, a: &CMatrix) -> CMatrix {
        self.w.adjoint() * self.pi(a) * &self.w
    }

    /// Dimension of `span{π(A) W x}`, i.e. of the minimal part of this dilation.
    pub fn pruned_dimension(&self) -> usize {
        let units: Vec<CMatrix> = matrix_units(self.d).iter().map(|e| self.pi(e)).collect();
        span_of_images(&units, &self.w, self.dim())
    }
}

pub fn kraus_dilation(psi: &CpMap) -> Result<KrausDilation> {
    let ops = kraus(psi, DEFAULT_RANK_TOL)?;
    KrausDilation::from_kraus(psi.d, psi.h, &ops)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpOrderVerdict {
    pub holds: bool,
    /// Smallest eigenvalue of `Choi(ψ) − Choi(φ)`.
    pub min_eigenvalue: f64,
    /// Verdict of the kernel-level order `K_φ ≤ K_ψ`.
    pub kernel_order_holds: bool,
}

/// `φ ≤ ψ` in the sense that `ψ − φ` is CP; cross-checked against `K_φ ≤ K_ψ`.
pub fn cp_order(phi: &CpMap, psi: &CpMap, tol: f64) -> Result<CpOrderVerdict> {
    phi.same_shape(psi)?;
    let diff = psi.choi().sub(phi.choi())?;
    let v = numerics::psd_check(&diff, tol);
    let kernel = check_order(&cp_gram(phi)?, &cp_gram(psi)?, tol)?;
    if kernel.holds != v.is_psd {
        return Err(Error::Numerical(format!(
            "Choi test ({:e}) and kernel test ({:e}) disagree",
            v.min_eigenvalue, kernel.min_eigenvalue
        )));
    }
    Ok(CpOrderVerdict {
        holds: v.is_psd,
        min_eigenvalue: v.min_eigenvalue,
        kernel_order_holds: kernel.holds,
    })
}

/// `T` in the commutant `π_ψ(M_d)'` with `φ(A) = V* T^{1/2} π(A) T^{1/2} V`.
#[derive(Debug, Clone)]
pub struct RnCommutantOperator {
    t: HermitianMatrix,
    t_root: HermitianMatrix,
    pub commutator_defect: f64,
    pub dilation: StinespringDilation,
}

impl RnCommutantOperator {
    pub fn operator(&self) -> &HermitianMatrix {
        &self.t
    }

    /// `V* T^{1/2} π(A) T^{1/2} V`.
    pub fn reconstruct_sandwich(&self, a: &CMatrix) -> Result<CMatrix> {
        let v = &self.dilation.v;
        let r = self.t_root.matrix();
        Ok(v.adjoint() * r * self.dilation.pi(a)? * r * v)
    }

    /// `V* T π(A) V`.
    pub fn reconstruct_left(&self, a: &CMatrix) -> Result<CMatrix> {
        let v = &self.dilation.v;
        Ok(v.adjoint() * self.t.matrix() * self.dilation.pi(a)? * v)
    }
}

/// Radon–Nikodym derivative of `φ` with respect to `ψ` on the minimal dilation of `ψ`.
pub fn cp_rn(phi: &CpMap, psi: &CpMap) -> Result<RnCommutantOperator> {
    require_cp(phi)?;
    let order = cp_order(phi, psi, DEFAULT_PSD_TOL)?;
    if !order.holds {
        return Err(Error::OrderViolated(format!(
            "ψ − φ has Choi eigenvalue {:e}",
            order.min_eigenvalue
        )));
    }
    let dilation = stinespring(psi)?;
    let rn = rn_operator_with_factor(&cp_gram(phi)?, dilation.factors())?;
    let t = rn.operator().clone();
    let t_root = psd_sqrt(&t, DEFAULT_PSD_TOL)?;
    let commutator_defect = dilation
        .pi_units
        .iter()
        .map(|pi| numerics::max_abs(&(t.matrix() * pi - pi * t.matrix())))
        .fold(0.0_f64, f64::max);
    Ok(RnCommutantOperator {
        t,
        t_root,
        commutator_defect,
        dilation,
    })
}

/// Gaussian process `W_ψ(A)` over the matrix units with
/// `E[⟨a, W(A)⟩ ⟨W(B), b⟩] = ⟨a, ψ(A* B) b⟩`.
pub fn gp_decompose(psi: &CpMap, n_draws: usize, seed: u64) -> Result<GaussianDraw> {
    let gram = kernel_from_cp(psi)?;
    let factors = factorize(&gram, FactorMode::Eigen)?;
    sample_gp(&factors, n_draws, seed, OnbMode::Standard)
}
