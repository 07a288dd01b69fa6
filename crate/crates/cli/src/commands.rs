//! One function per job command. Each returns the `result` object of the
//! envelope and, where the command has one, the CSV artifact.

use std::fmt::Write as _;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use opkernel::cpmaps::{self, CpMap};
use opkernel::gaussian::{self, GaussianDraw, OnbMode};
use opkernel::kernels::{assemble_block_gram, check_pd, BlockGram, OperatorKernel, SamplePoint};
use opkernel::numerics::{self, matrix_unit, CMatrix};
use opkernel::optim;
use opkernel::ordering;
use opkernel::rkhs::{self, FactorMode, FactorSystem};

use crate::job::{self, parse_inputs, Command, JobDocument, KernelSpec};
use crate::json::{complex, format_f64, matrix, num, reals, vector};
use crate::{CliError, Outcome, Tolerances};

pub fn run(job: &JobDocument, tol: Tolerances) -> Result<Outcome, CliError> {
    match job.command {
        Command::CheckPd => check_pd_cmd(job, tol),
        Command::Factorize => factorize_cmd(job),
        Command::SampleGp => sample_gp_cmd(job),
        Command::Order => order_cmd(job, tol),
        Command::Rn => rn_cmd(job),
        Command::Dilate => dilate_cmd(job),
        Command::CpRn => cp_rn_cmd(job),
        Command::GpDecompose => gp_decompose_cmd(job),
        Command::Fit => fit_cmd(job),
    }
}

fn gram_of(kernel: &KernelSpec, raw: &[Vec<f64>]) -> Result<(OperatorKernel, Vec<SamplePoint>, BlockGram), CliError> {
    let kernel = kernel.to_kernel()?;
    let points = job::points(raw)?;
    let gram = assemble_block_gram(&kernel, &points).map_err(CliError::from_input)?;
    Ok((kernel, points, gram))
}

fn require_seed(job: &JobDocument) -> Result<u64, CliError> {
    job.seed
        .ok_or_else(|| CliError::Schema(format!("{} needs a seed (job field or --seed)", job.command.name())))
}

/// `row,col,re,im` lines for every entry.
fn matrix_csv(m: &CMatrix) -> String {
    let mut out = String::from("row,col,re,im\n");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            let _ = writeln!(out, "{i},{j},{},{}", format_f64(z.re), format_f64(z.im));
        }
    }
    out
}

fn draws_csv(draws: &GaussianDraw) -> String {
    let mut out = String::from("draw,point,coordinate,re,im\n");
    for d in 0..draws.n_draws {
        for p in 0..draws.n_points {
            for (a, z) in draws.sample(d, p).iter().enumerate() {
                let _ = writeln!(out, "{d},{p},{a},{},{}", format_f64(z.re), format_f64(z.im));
            }
        }
    }
    out
}

/// SHA-256 over the little-endian `re, im` bytes of every sample in draw order.
fn samples_digest(draws: &GaussianDraw) -> String {
    let mut hasher = Sha256::new();
    for z in draws.samples() {
        hasher.update(z.re.to_le_bytes());
        hasher.update(z.im.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

fn max_diag(m: &CMatrix) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).fold(0.0_f64, f64::max)
}

/// Empirical covariance against the Gram, with the `5·√(2/N)·max diag` band.
fn covariance_summary(draws: &GaussianDraw, gram: &BlockGram) -> Value {
    let cov = draws.covariance_matrix();
    let error = numerics::max_abs(&(&cov - gram.matrix()));
    let band = 5.0 * (2.0 / draws.n_draws as f64).sqrt() * max_diag(gram.matrix());
    json!({
        "n_draws": draws.n_draws,
        "seed": draws.seed,
        "onb": match draws.onb_mode {
            OnbMode::Standard => "standard",
            OnbMode::Eigen => "eigen",
        },
        "covariance": matrix(&cov),
        "gram": matrix(gram.matrix()),
        "max_abs_error": num(error),
        "tolerance_band": num(band),
        "within_band": error <= band,
        "samples_sha256": samples_digest(draws),
    })
}

fn check_pd_cmd(job: &JobDocument, tol: Tolerances) -> Result<Outcome, CliError> {
    let inputs: job::KernelPoints = parse_inputs(&job.inputs)?;
    let (_, _, gram) = gram_of(&inputs.kernel, &inputs.points)?;
    let verdict = check_pd(&gram, tol.psd);
    let max_eig = gram.hermitian().eigen().max_eigenvalue();
    let result = json!({
        "n": gram.n(),
        "h": gram.h(),
        "dim": gram.dim(),
        "is_psd": verdict.is_psd,
        "min_eig": num(verdict.min_eigenvalue),
        "max_eig": num(max_eig),
    });
    let mut outcome = Outcome::ok(result).with_csv(matrix_csv(gram.matrix()));
    if !verdict.is_psd {
        outcome.violation = Some(CliError::Core(opkernel::Error::NotPsd {
            min_eigenvalue: verdict.min_eigenvalue,
        }));
    }
    Ok(outcome)
}

fn factors_json(factors: &FactorSystem) -> Value {
    Value::Array(factors.factors().iter().map(matrix).collect())
}

fn factorize_cmd(job: &JobDocument) -> Result<Outcome, CliError> {
    let inputs: job::FactorizeInputs = parse_inputs(&job.inputs)?;
    let (_, _, gram) = gram_of(&inputs.kernel, &inputs.points)?;
    let factors = rkhs::factorize(&gram, inputs.mode.into())?;
    let error = factors.reconstruction_error(&gram)?;
    let result = json!({
        "mode": match FactorMode::from(inputs.mode) {
            FactorMode::Eigen => "eigen",
            FactorMode::Cholesky => "cholesky",
        },
        "r": factors.rank(),
        "rank": factors.span_rank(),
        "factors": factors_json(&factors),
        "reconstruction_error": num(error),
    });
    Ok(Outcome::ok(result).with_csv(matrix_csv(factors.stacked())))
}

fn sample_gp_cmd(job: &JobDocument) -> Result<Outcome, CliError> {
    let inputs: job::SampleGpInputs = parse_inputs(&job.inputs)?;
    let seed = require_seed(job)?;
    let (_, _, gram) = gram_of(&inputs.kernel, &inputs.points)?;
    let factors = rkhs::factorize(&gram, inputs.mode.into())?;
    let draws = gaussian::sample_gp(&factors, inputs.n_draws, seed, inputs.onb.into())?;
    let mut result = covariance_summary(&draws, &gram);
    result["r"] = json!(factors.rank());
    Ok(Outcome::ok(result).with_csv(draws_csv(&draws)))
}

fn order_cmd(job: &JobDocument, tol: Tolerances) -> Result<Outcome, CliError> {
    let inputs: job::PairInputs = parse_inputs(&job.inputs)?;
    let (_, _, gk) = gram_of(&inputs.kernel_k, &inputs.points)?;
    let (_, _, gl) = gram_of(&inputs.kernel_l, &inputs.points)?;
    let verdict = ordering::check_order(&gk, &gl, tol.psd).map_err(CliError::from_input)?;
    let result = json!({
        "holds": verdict.holds,
        "min_eigenvalue": num(verdict.min_eigenvalue),
    });
    let mut outcome = Outcome::ok(result);
    if !verdict.holds {
        outcome.violation = Some(CliError::Precondition {
            reason: "order_violated",
            message: format!("G_L − G_K has eigenvalue {:e}", verdict.min_eigenvalue),
        });
    }
    Ok(outcome)
}

fn rn_cmd(job: &JobDocument) -> Result<Outcome, CliError> {
    let inputs: job::PairInputs = parse_inputs(&job.inputs)?;
    let (_, _, gk) = gram_of(&inputs.kernel_k, &inputs.points)?;
    let (_, _, gl) = gram_of(&inputs.kernel_l, &inputs.points)?;
    let rn = ordering::rn_operator(&gk, &gl).map_err(CliError::from_input)?;
    let factors_l = rkhs::factorize(&gl, FactorMode::Eigen)?;
    let mut error = 0.0_f64;
    for i in 0..gk.n() {
        for j in 0..gk.n() {
            let k_ij = ordering::reconstruct_from_t(&factors_l, &rn, i, j)?;
            error = error.max(numerics::max_abs(&(k_ij - gk.block(i, j))));
        }
    }
    let spectrum = rn.operator().eigen().eigenvalues;
    let result = json!({
        "r": rn.operator().dim(),
        "t": matrix(rn.operator().matrix()),
        "spectrum": reals(spectrum.as_slice()),
        "range_projector": matrix(rn.range_projector().matrix()),
        "residual": num(rn.residual()),
        "reconstruction_error": num(error),
    });
    Ok(Outcome::ok(result).with_csv(matrix_csv(rn.operator().matrix())))
}

fn dilate_cmd(job: &JobDocument) -> Result<Outcome, CliError> {
    let inputs: job::DilateInputs = parse_inputs(&job.inputs)?;
    let psi = inputs.map.to_map()?;
    let dil = cpmaps::stinespring(&psi)?;
    let kraus = cpmaps::kraus(&psi, numerics::DEFAULT_RANK_TOL)?;
    let kd = cpmaps::kraus_dilation(&psi)?;
    let d = psi.d();
    let pi_units: Vec<Value> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| matrix(dil.pi_unit(i, j)))
        .collect();
    let result = json!({
        "d": d,
        "h": psi.h(),
        "dim_k": dil.dim_k,
        "minimal": dil.minimal,
        "span_dimension": dil.span_dimension(),
        "defects": {
            "exactness": num(dil.exactness_defect(&psi)),
            "multiplicativity": num(dil.multiplicativity_defect()),
            "adjoint": num(dil.adjoint_defect()),
        },
        "v": matrix(&dil.v),
        "pi_units": pi_units,
        "kraus": kraus.iter().map(matrix).collect::<Vec<_>>(),
        "kraus_dilation_dim": kd.dim(),
        "pruned_dimension": kd.pruned_dimension(),
    });
    Ok(Outcome::ok(result).with_csv(matrix_csv(&dil.v)))
}

/// `max_ij ‖f(E_ij) − φ(E_ij)‖_max`.
fn unit_error(phi: &CpMap, f: impl Fn(&CMatrix) -> opkernel::Result<CMatrix>) -> Result<f64, CliError> {
    let d = phi.d();
    let mut worst = 0.0_f64;
    for i in 0..d {
        for j in 0..d {
            let got = f(&matrix_unit(d, i, j))?;
            worst = worst.max(numerics::max_abs(&(got - phi.unit_image(i, j))));
        }
    }
    Ok(worst)
}

fn cp_rn_cmd(job: &JobDocument) -> Result<Outcome, CliError> {
    let inputs: job::CpRnInputs = parse_inputs(&job.inputs)?;
    let phi = inputs.phi.to_map()?;
    let psi = inputs.psi.to_map()?;
    let rn = cpmaps::cp_rn(&phi, &psi).map_err(CliError::from_input)?;
    let sandwich = unit_error(&phi, |a| rn.reconstruct_sandwich(a))?;
    let left = unit_error(&phi, |a| rn.reconstruct_left(a))?;
    let result = json!({
        "dim_k": rn.dilation.dim_k,
        "t": matrix(rn.operator().matrix()),
        "commutator_defect": num(rn.commutator_defect),
        "sandwich_error": num(sandwich),
        "left_error": num(left),
    });
    Ok(Outcome::ok(result).with_csv(matrix_csv(rn.operator().matrix())))
}

fn gp_decompose_cmd(job: &JobDocument) -> Result<Outcome, CliError> {
    let inputs: job::GpDecomposeInputs = parse_inputs(&job.inputs)?;
    let seed = require_seed(job)?;
    let psi = inputs.map.to_map()?;
    let gram = cpmaps::kernel_from_cp(&psi)?;
    let draws = cpmaps::gp_decompose(&psi, inputs.n_draws, seed)?;
    let mut result = covariance_summary(&draws, &gram);
    result["d"] = json!(psi.d());
    result["h"] = json!(psi.h());
    Ok(Outcome::ok(result).with_csv(draws_csv(&draws)))
}

fn fit_cmd(job: &JobDocument) -> Result<Outcome, CliError> {
    let inputs: job::FitInputs = parse_inputs(&job.inputs)?;
    let (kernel, points, _) = gram_of(&inputs.kernel, &inputs.points)?;
    let c = job::complex_vector(&inputs.data, "data")?;
    let model = optim::optimize_rho(&kernel, &points, &c, inputs.beta, inputs.max_iters, inputs.conv_tol)
        .map_err(CliError::from_input)?;
    let predictions = points
        .iter()
        .map(|s| model.predict(s).map(complex))
        .collect::<Result<Vec<_>, _>>()?;
    let result = json!({
        "rho": matrix(model.rho.matrix()),
        "alpha": vector(&model.alpha),
        "objective_trace": reals(&model.objective_trace),
        "fw_gap": num(model.fw_gap),
        "iterations": model.iterations,
        "beta": num(model.beta),
        "predictions": predictions,
    });
    Ok(Outcome::ok(result).with_csv(matrix_csv(model.rho.matrix())))
}
