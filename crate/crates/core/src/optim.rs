//! Joint fit of a function and a density operator.
//!
//! For data `c_i` at points `s_i` the model minimises
//! `Σ_i |f(s_i) − c_i|² + β ‖f‖²` over `f ∈ H_{K_ρ}` and density operators `ρ`,
//! where `K_ρ(s, t) = Trace(ρ K(s, t))`. At fixed `ρ` the inner problem is
//! kernel ridge regression with value `J(ρ) = β c* (G_ρ + βI)⁻¹ c`, which is
//! convex in `ρ`; the outer problem runs Frank–Wolfe over the density set.

use nalgebra::Cholesky;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{assemble_block_gram, check_pd, trace_product, BlockGram, OperatorKernel, SamplePoint};
use crate::numerics::{self, CMatrix, CVector, HermitianMatrix, DEFAULT_PSD_TOL};

/// Tolerance on `|Trace ρ − 1|`.
pub const TRACE_TOL: f64 = 1e-10;

/// Positive semidefinite matrix with unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    rho: HermitianMatrix,
}

impl DensityOperator {
    pub fn new(m: &CMatrix) -> Result<Self> {
        let herm = HermitianMatrix::hermitize(m)?;
        if herm.defect() > 1e-10 * (1.0 + numerics::max_abs(m)) {
            return Err(Error::InvalidDensity(format!("not Hermitian (defect {:e})", herm.defect())));
        }
        Self::from_hermitian(herm)
    }

    pub fn from_hermitian(rho: HermitianMatrix) -> Result<Self> {
        let verdict = numerics::psd_check(&rho, DEFAULT_PSD_TOL);
        if !verdict.is_psd {
            return Err(Error::InvalidDensity(format!(
                "negative eigenvalue {:e}",
                verdict.min_eigenvalue
            )));
        }
        let trace = rho.matrix().trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensity(format!("trace {} differs from 1", trace)));
        }
        Ok(Self { rho })
    }

    /// `I / h`.
    pub fn maximally_mixed(h: usize) -> Self {
        Self {
            rho: HermitianMatrix::identity(h).scaled(1.0 / h as f64),
        }
    }

    /// `v v* / ‖v‖²`.
    pub fn pure(v: &CVector) -> Result<Self> {
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidDensity("zero state vector".into()));
        }
        let u = v / Complex64::new(norm, 0.0);
        Self::new(&(&u * u.adjoint()))
    }

    /// `(1 − γ) ρ + γ σ`, renormalised to unit trace.
    pub fn mix(&self, other: &DensityOperator, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!("mixing weight {gamma} outside [0, 1]")));
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "density operators of size {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let m = self.matrix() * Complex64::new(1.0 - gamma, 0.0) + other.matrix() * Complex64::new(gamma, 0.0);
        let trace = m.trace().re;
        Self::new(&(m / Complex64::new(trace, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        self.rho.matrix()
    }

    pub fn hermitian(&self) -> &HermitianMatrix {
        &self.rho
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")))
    }
}

/// `(G_ρ)_{ij} = Trace(ρ K(s_i, s_j))`.
pub fn gram_rho(kernel: &OperatorKernel, points: &[SamplePoint], rho: &DensityOperator) -> Result<HermitianMatrix> {
    gram_rho_from_blocks(&assemble_block_gram(kernel, points)?, rho)
}

/// `G_ρ` from an assembled block Gram.
pub fn gram_rho_from_blocks(gram: &BlockGram, rho: &DensityOperator) -> Result<HermitianMatrix> {
    contract_blocks(gram, rho.hermitian())
}

fn contract_blocks(gram: &BlockGram, rho: &HermitianMatrix) -> Result<HermitianMatrix> {
    if rho.dim() != gram.h() {
        return Err(Error::DimensionMismatch(format!(
            "density operator is {0}x{0}, kernel has h = {1}",
            rho.dim(),
            gram.h()
        )));
    }
    let n = gram.n();
    let g = CMatrix::from_fn(n, n, |i, j| trace_product(rho.matrix(), &gram.block(i, j)));
    HermitianMatrix::hermitize(&g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrrSolution {
    pub alpha: CVector,
    /// `β c* α`, the minimised inner objective.
    pub objective: f64,
}

/// `α = (G + βI)⁻¹ c`.
pub fn krr_solve(g: &HermitianMatrix, c: &CVector, beta: f64) -> Result<KrrSolution> {
    check_beta(beta)?;
    let n = g.dim();
    if c.len() != n {
        return Err(Error::DimensionMismatch(format!("{} data values for {n} points", c.len())));
    }
    let shifted = g.matrix() + CMatrix::identity(n, n) * Complex64::new(beta, 0.0);
    let alpha = match Cholesky::new(shifted) {
        Some(chol) => chol.solve(c),
        None => {
            return Err(Error::NotPsd {
                min_eigenvalue: g.eigen().min_eigenvalue(),
            })
        }
    };
    let objective = beta * c.dotc(&alpha).re;
    Ok(KrrSolution { alpha, objective })
}

/// The outer objective `J(ρ)` and its gradient for fixed data.
#[derive(Debug, Clone)]
pub struct RhoObjective {
    gram: BlockGram,
    c: CVector,
    beta: f64,
}

impl RhoObjective {
    pub fn new(kernel: &OperatorKernel, points: &[SamplePoint], c: &CVector, beta: f64) -> Result<Self> {
        Self::from_blocks(assemble_block_gram(kernel, points)?, c, beta)
    }

    pub fn from_blocks(gram: BlockGram, c: &CVector, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        if c.len() != gram.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} data values for {} points",
                c.len(),
                gram.n()
            )));
        }
        Ok(Self {
            gram,
            c: c.clone(),
            beta,
        })
    }

    pub fn block_gram(&self) -> &BlockGram {
        &self.gram
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn data(&self) -> &CVector {
        &self.c
    }

    pub fn gram(&self, rho: &DensityOperator) -> Result<HermitianMatrix> {
        gram_rho_from_blocks(&self.gram, rho)
    }

    pub fn solve(&self, rho: &DensityOperator) -> Result<KrrSolution> {
        self.solve_hermitian(rho.hermitian())
    }

    /// Inner solve for any Hermitian `ρ`, e.g. finite-difference probes.
    pub fn solve_hermitian(&self, rho: &HermitianMatrix) -> Result<KrrSolution> {
        krr_solve(&contract_blocks(&self.gram, rho)?, &self.c, self.beta)
    }

    pub fn value(&self, rho: &DensityOperator) -> Result<f64> {
        Ok(self.solve(rho)?.objective)
    }

    /// `M = −β Σ ᾱ_i α_j K(s_i, s_j)`, so that `dJ = Trace(Δ M)`.
    pub fn gradient(&self, alpha: &CVector) -> Result<HermitianMatrix> {
        grad_from_blocks(&self.gram, alpha, self.beta)
    }
}

fn grad_from_blocks(gram: &BlockGram, alpha: &CVector, beta: f64) -> Result<HermitianMatrix> {
    let (n, h) = (gram.n(), gram.h());
    if alpha.len() != n {
        return Err(Error::DimensionMismatch(format!("{} coefficients for {n} points", alpha.len())));
    }
    let mut m = CMatrix::zeros(h, h);
    for i in 0..n {
        for j in 0..n {
            let w = alpha[i].conj() * alpha[j];
            if w != Complex64::new(0.0, 0.0) {
                m += gram.block(i, j) * w;
            }
        }
    }
    HermitianMatrix::hermitize(&(m * Complex64::new(-beta, 0.0)))
}

/// Gradient of `J` with respect to `ρ` at the solution `alpha`.
pub fn objective_grad_rho(
    kernel: &OperatorKernel,
    points: &[SamplePoint],
    alpha: &CVector,
    beta: f64,
) -> Result<HermitianMatrix> {
    check_beta(beta)?;
    grad_from_blocks(&assemble_block_gram(kernel, points)?, alpha, beta)
}

/// Fitted model `f = Σ_j α_j K_ρ(·, s_j)`.
#[derive(Debug, Clone)]
pub struct RegressionModel {
    pub alpha: CVector,
    pub rho: DensityOperator,
    pub beta: f64,
    pub points: Vec<SamplePoint>,
    pub kernel: OperatorKernel,
    /// `J` after each accepted iterate, starting from `ρ₀`.
    pub objective_trace: Vec<f64>,
    /// Frank–Wolfe gap `Trace((ρ − vv*) M)` at the final iterate.
    pub fw_gap: f64,
    pub iterations: usize,
}

impl RegressionModel {
    /// `f(s) = Σ_j α_j Trace(ρ K(s, s_j))`.
    pub fn predict(&self, s: &SamplePoint) -> Result<Complex64> {
        predict(self, s)
    }
}

pub fn predict(model: &RegressionModel, s: &SamplePoint) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, t) in model.alpha.iter().zip(&model.points) {
        acc += a * model.kernel.trace_kernel(&model.rho, s, t)?;
    }
    Ok(acc)
}

const GOLDEN_TOL: f64 = 1e-10;

/// Minimises a convex function on `[0, 1]`; endpoints are compared as well.
fn line_search(mut f: impl FnMut(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > GOLDEN_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    let f_one = f(1.0)?;
    if f_one < best.1 {
        best = (1.0, f_one);
    }
    Ok(best)
}

/// Frank–Wolfe over density operators with exact line search, started at `I/h`.
///
/// Stops when the gap falls below `conv_tol`, when no step decreases `J`, or
/// after `max_iters` iterates (the initial one included).
pub fn optimize_rho(
    kernel: &OperatorKernel,
    points: &[SamplePoint],
    c: &CVector,
    beta: f64,
    max_iters: usize,
    conv_tol: f64,
) -> Result<RegressionModel> {
    if max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }
    if !(conv_tol >= 0.0 && conv_tol.is_finite()) {
        return Err(Error::InvalidParameter(format!("conv_tol must be non-negative, got {conv_tol}")));
    }
    let objective = RhoObjective::new(kernel, points, c, beta)?;
    let verdict = check_pd(objective.block_gram(), DEFAULT_PSD_TOL);
    if !verdict.is_psd {
        return Err(Error::NotPsd {
            min_eigenvalue: verdict.min_eigenvalue,
        });
    }

    let h = kernel.h();
    let mut rho = DensityOperator::maximally_mixed(h);
    let mut sol = objective.solve(&rho)?;
    let mut trace = vec![sol.objective];
    let mut iterations = 1;
    let fw_gap = loop {
        let grad = objective.gradient(&sol.alpha)?;
        let eig = grad.eigen();
        let lambda_min = eig.min_eigenvalue();
        let gap = trace_product(rho.matrix(), grad.matrix()).re - lambda_min;
        if gap < conv_tol || iterations >= max_iters {
            break gap;
        }
        let vertex = DensityOperator::pure(&eig.eigenvectors.column(h - 1).into_owned())?;
        let (gamma, value) = line_search(|g| objective.value(&rho.mix(&vertex, g)?))?;
        if !(value < sol.objective) {
            break gap;
        }
        rho = rho.mix(&vertex, gamma)?;
        sol = objective.solve(&rho)?;
        // the re-solve can differ from the probe in the last bits
        let value = sol.objective.min(*trace.last().expect("non-empty trace"));
        trace.push(value);
        iterations += 1;
    };

    Ok(RegressionModel {
        alpha: sol.alpha,
        rho,
        beta,
        points: points.to_vec(),
        kernel: kernel.clone(),
        objective_trace: trace,
        fw_gap,
        iterations,
    })
}
