//! Operator-valued kernel specifications, pointwise evaluation, flattening to
//! scalar kernels, and block Gram assembly.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cpmaps::CpMap;
use crate::error::{Error, Result};
use crate::numerics::{self, CMatrix, CVector, HermitianMatrix, PsdVerdict};
use crate::optim::DensityOperator;

/// A sample point `s ∈ S`, stored as a finite real vector.
///
/// Index-based kernels ([`OperatorKernel::ExplicitFactor`] and
/// [`OperatorKernel::CpInduced`]) read a one-dimensional point `[i]` as the
/// index of a registered point.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    coords: Vec<f64>,
}

impl SamplePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("sample point has no coordinates".into()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("sample point has non-finite coordinates".into()));
        }
        Ok(Self { coords })
    }

    pub fn scalar(x: f64) -> Self {
        Self { coords: vec![x] }
    }

    pub fn index(i: usize) -> Self {
        Self {
            coords: vec![i as f64],
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    fn as_index(&self, count: usize) -> Result<usize> {
        let x = self.coords[0];
        if self.coords.len() != 1 || x < 0.0 || x.fract() != 0.0 {
            return Err(Error::UnknownPoint(format!(
                "{:?} is not a registered point index",
                self.coords
            )));
        }
        let i = x as usize;
        if i >= count {
            return Err(Error::UnknownPoint(format!(
                "index {i} but only {count} points are registered"
            )));
        }
        Ok(i)
    }
}

/// Scalar positive-definite kernels on `R^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarKernel {
    /// `exp(−‖s − t‖² / (2σ²))`
    Gaussian { width: f64 },
    /// `exp(−‖s − t‖ / γ)`
    Laplacian { scale: f64 },
    /// `(⟨s, t⟩ + c)^p`
    Polynomial { degree: u32, offset: f64 },
    /// `⟨s, t⟩`
    Linear,
}

impl ScalarKernel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScalarKernel::Gaussian { width } => width > 0.0 && width.is_finite(),
            ScalarKernel::Laplacian { scale } => scale > 0.0 && scale.is_finite(),
            ScalarKernel::Polynomial { degree, offset } => {
                degree >= 1 && offset >= 0.0 && offset.is_finite()
            }
            ScalarKernel::Linear => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("scalar kernel parameters out of range: {self:?}")))
        }
    }

    pub fn eval(&self, s: &[f64], t: &[f64]) -> f64 {
        let sq_dist = || s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let dot = || s.iter().zip(t).map(|(a, b)| a * b).sum::<f64>();
        match *self {
            ScalarKernel::Gaussian { width } => (-sq_dist() / (2.0 * width * width)).exp(),
            ScalarKernel::Laplacian { scale } => (-sq_dist().sqrt() / scale).exp(),
            ScalarKernel::Polynomial { degree, offset } => (dot() + offset).powi(degree as i32),
            ScalarKernel::Linear => dot(),
        }
    }
}

/// One term `k(s, t) · B` of a separable kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableTerm {
    pub kernel: ScalarKernel,
    pub coefficient: HermitianMatrix,
}

/// `K: S × S → L(C^h)`.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKernel {
    /// `K(s, t) = Σ_m k_m(s, t) B_m`. Positive definite when every `B_m` is PSD.
    Separable { h: usize, terms: Vec<SeparableTerm> },
    /// `K(i, j) = A_i* A_j` for registered factors `A_i: C^h → C^r`.
    ExplicitFactor { h: usize, factors: Vec<CMatrix> },
    /// `K(i, j) = ψ(X_i* X_j)` over registered algebra elements `X_i ∈ M_d`.
    CpInduced { map: CpMap, elements: Vec<CMatrix> },
}

impl OperatorKernel {
    pub fn separable(terms: Vec<SeparableTerm>) -> Result<Self> {
        let h = terms
            .first()
            .ok_or(Error::Empty("separable kernel needs at least one term"))?
            .coefficient
            .dim();
        if h == 0 {
            return Err(Error::InvalidParameter("h must be positive".into()));
        }
        for term in &terms {
            term.kernel.validate()?;
            if term.coefficient.dim() != h {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient is {0}x{0}, expected {h}x{h}",
                    term.coefficient.dim()
                )));
            }
        }
        Ok(OperatorKernel::Separable { h, terms })
    }

    /// Single-term separable kernel `k(s, t) · B`.
    pub fn scalar_times(kernel: ScalarKernel, coefficient: HermitianMatrix) -> Result<Self> {
        Self::separable(vec![SeparableTerm {
            kernel,
            coefficient,
        }])
    }

    pub fn explicit_factor(factors: Vec<CMatrix>) -> Result<Self> {
        let first = factors
            .first()
            .ok_or(Error::Empty("explicit factor kernel needs at least one factor"))?;
        let (r, h) = first.shape();
        if h == 0 {
            return Err(Error::InvalidParameter("h must be positive".into()));
        }
        if let Some(bad) = factors.iter().find(|a| a.shape() != (r, h)) {
            return Err(Error::DimensionMismatch(format!(
                "factor is {}x{}, expected {r}x{h}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        Ok(OperatorKernel::ExplicitFactor { h, factors })
    }

    pub fn cp_induced(map: CpMap, elements: Vec<CMatrix>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Empty("cp-induced kernel needs at least one element"));
        }
        let d = map.d();
        if let Some(bad) = elements.iter().find(|x| x.shape() != (d, d)) {
            return Err(Error::DimensionMismatch(format!(
                "algebra element is {}x{}, expected {d}x{d}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        Ok(OperatorKernel::CpInduced { map, elements })
    }

    /// Dimension of `H`.
    pub fn h(&self) -> usize {
        match self {
            OperatorKernel::Separable { h, .. } | OperatorKernel::ExplicitFactor { h, .. } => *h,
            OperatorKernel::CpInduced { map, .. } => map.h(),
        }
    }

    /// `K(s, t)` as an `h × h` matrix.
    pub fn eval(&self, s: &SamplePoint, t: &SamplePoint) -> Result<CMatrix> {
        match self {
            OperatorKernel::Separable { h, terms } => {
                if s.dim() != t.dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "points of dimension {} and {}",
                        s.dim(),
                        t.dim()
                    )));
                }
                let mut out = CMatrix::zeros(*h, *h);
                for term in terms {
                    let k = term.kernel.eval(s.coords(), t.coords());
                    out += term.coefficient.matrix() * Complex64::new(k, 0.0);
                }
                Ok(out)
            }
            OperatorKernel::ExplicitFactor { factors, .. } => {
                let i = s.as_index(factors.len())?;
                let j = t.as_index(factors.len())?;
                Ok(factors[i].adjoint() * &factors[j])
            }
            OperatorKernel::CpInduced { map, elements } => {
                let i = s.as_index(elements.len())?;
                let j = t.as_index(elements.len())?;
                map.apply(&(elements[i].adjoint() * &elements[j]))
            }
        }
    }

    /// Flattened scalar kernel `⟨a, K(s, t) b⟩`.
    pub fn flatten(&self, s: &SamplePoint, a: &CVector, t: &SamplePoint, b: &CVector) -> Result<Complex64> {
        let h = self.h();
        if a.len() != h || b.len() != h {
            return Err(Error::DimensionMismatch(format!(
                "vectors of length {} and {}, expected {h}",
                a.len(),
                b.len()
            )));
        }
        let k = self.eval(s, t)?;
        Ok(a.dotc(&(k * b)))
    }

    /// `Trace(ρ K(s, t))`.
    pub fn trace_kernel(&self, rho: &DensityOperator, s: &SamplePoint, t: &SamplePoint) -> Result<Complex64> {
        if rho.dim() != self.h() {
            return Err(Error::DimensionMismatch(format!(
                "density operator is {0}x{0}, kernel has h = {1}",
                rho.dim(),
                self.h()
            )));
        }
        let k = self.eval(s, t)?;
        Ok(trace_product(rho.matrix(), &k))
    }
}

/// `Trace(A B)` without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// The `nh × nh` matrix of blocks `K(s_i, s_j)`, entry `(i·h + a, j·h + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGram {
    n: usize,
    h: usize,
    matrix: HermitianMatrix,
}

impl BlockGram {
    pub fn from_matrix(n: usize, h: usize, matrix: HermitianMatrix) -> Result<Self> {
        if matrix.dim() != n * h {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {0}x{0}, expected {1}x{1}",
                matrix.dim(),
                n * h
            )));
        }
        Ok(Self { n, h, matrix })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.n * self.h
    }

    pub fn index(&self, point: usize, coord: usize) -> usize {
        point * self.h + coord
    }

    pub fn matrix(&self) -> &CMatrix {
        self.matrix.matrix()
    }

    pub fn hermitian(&self) -> &HermitianMatrix {
        &self.matrix
    }

    /// Hermiticity defect recorded at assembly.
    pub fn defect(&self) -> f64 {
        self.matrix.defect()
    }

    pub fn block(&self, i: usize, j: usize) -> CMatrix {
        self.matrix()
            .view((i * self.h, j * self.h), (self.h, self.h))
            .into_owned()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            h: self.h,
            matrix: self.matrix.scaled(factor),
        }
    }

    pub fn same_shape(&self, other: &BlockGram) -> Result<()> {
        if self.n != other.n || self.h != other.h {
            return Err(Error::DimensionMismatch(format!(
                "Grams over (n={}, h={}) and (n={}, h={})",
                self.n, self.h, other.n, other.h
            )));
        }
        Ok(())
    }
}

/// Evaluates every block `K(s_i, s_j)` and hermitizes the result.
pub fn assemble_block_gram(kernel: &OperatorKernel, points: &[SamplePoint]) -> Result<BlockGram> {
    if points.is_empty() {
        return Err(Error::Empty("no sample points"));
    }
    let n = points.len();
    let h = kernel.h();
    let rows: Vec<Vec<CMatrix>> = points
        .par_iter()
        .map(|s| points.iter().map(|t| kernel.eval(s, t)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut full = CMatrix::zeros(n * h, n * h);
    for (i, row) in rows.iter().enumerate() {
        for (j, block) in row.iter().enumerate() {
            full.view_mut((i * h, j * h), (h, h)).copy_from(block);
        }
    }
    BlockGram::from_matrix(n, h, HermitianMatrix::hermitize(&full)?)
}

/// Positive definiteness of the kernel on the sampled points.
pub fn check_pd(gram: &BlockGram, tol: f64) -> PsdVerdict {
    numerics::psd_check(gram.hermitian(), tol)
}
