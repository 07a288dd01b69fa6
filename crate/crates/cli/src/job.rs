//! Job documents and their conversion into library types.
//!
//! Conventions: complex numbers are `[re, im]`; matrices are
//! `{"rows": r, "cols": c, "data": [[re, im], ...]}` in row-major order;
//! sample points are coordinate lists.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use opkernel::cpmaps::CpMap;
use opkernel::kernels::{OperatorKernel, SamplePoint, ScalarKernel, SeparableTerm};
use opkernel::numerics::{self, HermitianMatrix};
use opkernel::rkhs::FactorMode;
use opkernel::gaussian::OnbMode;
use opkernel::{CMatrix, CVector, Complex64};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CheckPd,
    Factorize,
    SampleGp,
    Order,
    Rn,
    Dilate,
    CpRn,
    GpDecompose,
    Fit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckPd => "check-pd",
            Command::Factorize => "factorize",
            Command::SampleGp => "sample-gp",
            Command::Order => "order",
            Command::Rn => "rn",
            Command::Dilate => "dilate",
            Command::CpRn => "cp-rn",
            Command::GpDecompose => "gp-decompose",
            Command::Fit => "fit",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Command::SampleGp | Command::GpDecompose)
    }
}

/// One job per invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobDocument {
    pub command: Command,
    pub inputs: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// PSD / order tolerance; the library default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Optional CSV file for the command's main matrix artifact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixSpec {
    pub fn to_matrix(&self, what: &str) -> Result<CMatrix, CliError> {
        if self.data.len() != self.rows * self.cols {
            return Err(CliError::Schema(format!(
                "{what}: {} entries for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        check_finite(self.data.iter().flatten().copied(), what)?;
        Ok(CMatrix::from_row_iterator(
            self.rows,
            self.cols,
            self.data.iter().map(|[re, im]| Complex64::new(*re, *im)),
        ))
    }

    pub fn to_hermitian(&self, what: &str) -> Result<HermitianMatrix, CliError> {
        let m = self.to_matrix(what)?;
        if m.nrows() != m.ncols() {
            return Err(CliError::Schema(format!("{what}: matrix must be square")));
        }
        let h = HermitianMatrix::hermitize(&m).map_err(|e| CliError::Schema(format!("{what}: {e}")))?;
        if h.defect() > 1e-10 * (1.0 + numerics::max_abs(&m)) {
            return Err(CliError::Schema(format!("{what}: matrix is not Hermitian")));
        }
        Ok(h)
    }
}

fn check_finite(values: impl Iterator<Item = f64>, what: &str) -> Result<(), CliError> {
    let mut values = values;
    if values.any(|x| !x.is_finite()) {
        return Err(CliError::Schema(format!("{what}: non-finite number")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarKernelSpec {
    Gaussian { width: f64 },
    Laplacian { scale: f64 },
    Polynomial { degree: u32, offset: f64 },
    Linear,
}

impl ScalarKernelSpec {
    fn to_kernel(&self) -> ScalarKernel {
        match *self {
            ScalarKernelSpec::Gaussian { width } => ScalarKernel::Gaussian { width },
            ScalarKernelSpec::Laplacian { scale } => ScalarKernel::Laplacian { scale },
            ScalarKernelSpec::Polynomial { degree, offset } => ScalarKernel::Polynomial { degree, offset },
            ScalarKernelSpec::Linear => ScalarKernel::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub kernel: ScalarKernelSpec,
    pub coefficient: MatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `Σ_m k_m(s, t) B_m`.
    Separable { terms: Vec<TermSpec> },
    /// `K(i, j) = A_i* A_j`; points are indices `[i]`.
    ExplicitFactor { factors: Vec<MatrixSpec> },
    /// `K(i, j) = ψ(X_i* X_j)`; points are indices `[i]`.
    CpInduced { map: CpMapSpec, elements: Vec<MatrixSpec> },
}

impl KernelSpec {
    pub fn to_kernel(&self) -> Result<OperatorKernel, CliError> {
        let kernel = match self {
            KernelSpec::Separable { terms } => {
                let terms = terms
                    .iter()
                    .enumerate()
                    .map(|(m, t)| {
                        Ok(SeparableTerm {
                            kernel: t.kernel.to_kernel(),
                            coefficient: t.coefficient.to_hermitian(&format!("terms[{m}].coefficient"))?,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                OperatorKernel::separable(terms)
            }
            KernelSpec::ExplicitFactor { factors } => {
                let factors = factors
                    .iter()
                    .enumerate()
                    .map(|(i, f)| f.to_matrix(&format!("factors[{i}]")))
                    .collect::<Result<Vec<_>, CliError>>()?;
                OperatorKernel::explicit_factor(factors)
            }
            KernelSpec::CpInduced { map, elements } => {
                let map = map.to_map()?;
                let elements = elements
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x.to_matrix(&format!("elements[{i}]")))
                    .collect::<Result<Vec<_>, CliError>>()?;
                OperatorKernel::cp_induced(map, elements)
            }
        };
        kernel.map_err(CliError::from_input)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CpMapSpec {
    /// Choi matrix with block `(i, j) = ψ(E_ij)`.
    Choi { d: usize, h: usize, choi: ChoiData },
    /// `ψ(A) = Σ V_k A V_k*` with `h × d` operators.
    Kraus { d: usize, h: usize, operators: Vec<MatrixSpec> },
    Identity { d: usize },
    Depolarizing { d: usize },
    Transpose { d: usize },
    Zero { d: usize, h: usize },
}

impl CpMapSpec {
    pub fn to_map(&self) -> Result<CpMap, CliError> {
        let check = |n: usize, what: &str| {
            if n == 0 {
                Err(CliError::Schema(format!("{what} must be positive")))
            } else {
                Ok(())
            }
        };
        match self {
            CpMapSpec::Choi { d, h, choi } => {
                check(*d, "d")?;
                check(*h, "h")?;
                CpMap::new(*d, *h, &choi.to_matrix(d * h)?).map_err(CliError::from_input)
            }
            CpMapSpec::Kraus { d, h, operators } => {
                check(*d, "d")?;
                check(*h, "h")?;
                let ops = operators
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v.to_matrix(&format!("operators[{k}]")))
                    .collect::<Result<Vec<_>, CliError>>()?;
                CpMap::from_kraus(*d, *h, &ops).map_err(CliError::from_input)
            }
            CpMapSpec::Identity { d } => check(*d, "d").map(|_| CpMap::identity(*d)),
            CpMapSpec::Depolarizing { d } => check(*d, "d").map(|_| CpMap::depolarizing(*d)),
            CpMapSpec::Transpose { d } => check(*d, "d").map(|_| CpMap::transpose(*d)),
            CpMapSpec::Zero { d, h } => {
                check(*d, "d")?;
                check(*h, "h")?;
                Ok(CpMap::zero(*d, *h))
            }
        }
    }
}

/// Choi entries as a matrix object or as a flat row-major `[[re, im], ...]` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChoiData {
    Matrix(MatrixSpec),
    Flat(Vec<[f64; 2]>),
}

impl ChoiData {
    fn to_matrix(&self, dim: usize) -> Result<CMatrix, CliError> {
        match self {
            ChoiData::Matrix(m) => m.to_matrix("choi"),
            ChoiData::Flat(data) => MatrixSpec {
                rows: dim,
                cols: dim,
                data: data.clone(),
            }
            .to_matrix("choi"),
        }
    }
}

pub fn points(raw: &[Vec<f64>]) -> Result<Vec<SamplePoint>, CliError> {
    if raw.is_empty() {
        return Err(CliError::Schema("points: at least one point is required".into()));
    }
    raw.iter()
        .map(|p| SamplePoint::new(p.clone()).map_err(CliError::from_input))
        .collect()
}

pub fn complex_vector(raw: &[[f64; 2]], what: &str) -> Result<CVector, CliError> {
    check_finite(raw.iter().flatten().copied(), what)?;
    Ok(CVector::from_iterator(
        raw.len(),
        raw.iter().map(|[re, im]| Complex64::new(*re, *im)),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorModeSpec {
    #[default]
    Eigen,
    Cholesky,
}

impl From<FactorModeSpec> for FactorMode {
    fn from(m: FactorModeSpec) -> Self {
        match m {
            FactorModeSpec::Eigen => FactorMode::Eigen,
            FactorModeSpec::Cholesky => FactorMode::Cholesky,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnbSpec {
    #[default]
    Standard,
    Eigen,
}

impl From<OnbSpec> for OnbMode {
    fn from(m: OnbSpec) -> Self {
        match m {
            OnbSpec::Standard => OnbMode::Standard,
            OnbSpec::Eigen => OnbMode::Eigen,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelPoints {
    pub kernel: KernelSpec,
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorizeInputs {
    pub kernel: KernelSpec,
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub mode: FactorModeSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleGpInputs {
    pub kernel: KernelSpec,
    pub points: Vec<Vec<f64>>,
    pub n_draws: usize,
    #[serde(default)]
    pub mode: FactorModeSpec,
    #[serde(default)]
    pub onb: OnbSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairInputs {
    pub kernel_k: KernelSpec,
    pub kernel_l: KernelSpec,
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilateInputs {
    pub map: CpMapSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpRnInputs {
    pub phi: CpMapSpec,
    pub psi: CpMapSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpDecomposeInputs {
    pub map: CpMapSpec,
    pub n_draws: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitInputs {
    pub kernel: KernelSpec,
    pub points: Vec<Vec<f64>>,
    pub data: Vec<[f64; 2]>,
    pub beta: f64,
    pub max_iters: usize,
    pub conv_tol: f64,
}

/// Parses the command-specific `inputs` object.
pub fn parse_inputs<T: serde::de::DeserializeOwned>(inputs: &Value) -> Result<T, CliError> {
    serde_json::from_value(inputs.clone()).map_err(|e| CliError::Schema(format!("inputs: {e}")))
}
