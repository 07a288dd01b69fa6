//! Acceptance gate: one PASS/FAIL line per criterion. Exits non-zero when any
//! criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use opkernel::cpmaps::{cp_rn, gp_decompose, kraus_dilation, stinespring, CpMap, KrausDilation};
use opkernel::gaussian::{derived_process, empirical_covariance, sample_gp, OnbMode};
use opkernel::kernels::{assemble_block_gram, BlockGram, OperatorKernel, SamplePoint, ScalarKernel, SeparableTerm};
use opkernel::numerics::{real_diag, HermitianMatrix, DEFAULT_PSD_TOL};
use opkernel::optim::{gram_rho, krr_solve, optimize_rho, DensityOperator, RhoObjective};
use opkernel::ordering::{aronszajn_norms, check_order, reconstruct_both, rn_operator, RnOperator};
use opkernel::rkhs::{compute_intertwiner, factorize, FactorMode, FactorSystem, RkhsElement};
use opkernel_testkit as tk;
use rand::Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn unit(h: usize, a: usize) -> tk::CVector {
    let mut v = tk::CVector::zeros(h);
    v[a] = c(1.0);
    v
}

fn block(n: usize, h: usize, m: &tk::CMatrix) -> BlockGram {
    BlockGram::from_matrix(n, h, common::herm(m)).unwrap()
}

fn separable_gram(seed: u64, max_n: usize, max_h: usize) -> BlockGram {
    let mut rng = tk::rng(seed);
    let h = rng.random_range(1..=max_h);
    let n = rng.random_range(1..=max_n);
    let dim = rng.random_range(1..=2);
    let k = common::random_separable(&mut rng, h);
    assemble_block_gram(&k, &common::random_points(&mut rng, n, dim)).unwrap()
}

/// Rank decisions near the `1e-12` relative threshold are ill-posed; such
/// instances are skipped and counted.
fn well_separated(g: &BlockGram) -> bool {
    tk::has_spectral_gap(g.matrix(), 1e-15, 1e-9)
}

fn c1_factorization() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in 0..200u64 {
        let g = separable_gram(1000 + seed, 12, 4);
        let bound = 1e-10 * (1.0 + tk::spectral_norm(g.matrix()));
        for mode in [FactorMode::Eigen, FactorMode::Cholesky] {
            let f = factorize(&g, mode).map_err(|e| format!("instance {seed}: {e}"))?;
            let factors = f.factors();
            for i in 0..g.n() {
                for j in 0..g.n() {
                    let err = tk::max_abs(&(factors[i].adjoint() * &factors[j] - g.block(i, j)));
                    ensure(err <= bound, || format!("instance {seed} {mode:?}: error {err:e} > {bound:e}"))?;
                    worst = worst.max(err / bound);
                }
            }
        }
    }
    Ok(format!("200 instances, worst error/bound {worst:.2e}"))
}

fn c2_uniqueness() -> Outcome {
    let (mut done, mut skipped, mut worst) = (0, 0, 0.0_f64);
    let mut seed = 2000u64;
    while done < 50 {
        let g = separable_gram(seed, 12, 4);
        seed += 1;
        if !well_separated(&g) {
            skipped += 1;
            continue;
        }
        let f1 = factorize(&g, FactorMode::Eigen).unwrap();
        let f2 = factorize(&g, FactorMode::Cholesky).unwrap();
        let u = compute_intertwiner(&f1, &f2).map_err(|e| e.to_string())?;
        ensure(u.intertwining_defect <= 1e-9, || {
            format!("seed {}: defect {:e}", seed - 1, u.intertwining_defect)
        })?;
        worst = worst.max(u.intertwining_defect);
        done += 1;
    }
    Ok(format!("50 instances ({skipped} without spectral gap skipped), worst defect {worst:.2e}"))
}

const N: usize = 100_000;

fn covariance_band(target: &tk::CMatrix) -> f64 {
    let max_diag = (0..target.nrows()).map(|p| target[(p, p)].re).fold(0.0_f64, f64::max);
    5.0 * (2.0 / N as f64).sqrt() * max_diag
}

fn c3_gp_covariance() -> Outcome {
    let (k, pts) = common::fixture_a();
    let g = assemble_block_gram(&k, &pts).unwrap();
    let band = covariance_band(g.matrix());
    let mut report = Vec::new();
    for mode in [FactorMode::Eigen, FactorMode::Cholesky] {
        let f = factorize(&g, mode).unwrap();
        for onb in [OnbMode::Standard, OnbMode::Eigen] {
            let draws = sample_gp(&f, N, 2024, onb).unwrap();
            let err = tk::max_abs(&(draws.covariance_matrix() - g.matrix()));
            ensure(err <= band, || format!("{mode:?}/{onb:?}: error {err} > {band}"))?;
            let est = empirical_covariance(&draws, &unit(2, 0), &unit(2, 0), 0, 1).unwrap();
            let off = (est.re - 0.606531).abs();
            ensure(off <= 0.0224, || format!("{mode:?}/{onb:?}: (0,1) entry {} off by {off}", est.re))?;
            report.push(format!("{err:.4}"));
        }
    }
    Ok(format!("max entry errors [{}] within {band:.4}", report.join(", ")))
}

fn planted_k(gl: &BlockGram, seed: u64) -> (BlockGram, tk::CMatrix) {
    let f = factorize(gl, FactorMode::Eigen).unwrap();
    let t0 = tk::random_contraction(&mut tk::rng(seed), f.rank());
    let gk = f.stacked().adjoint() * &t0 * f.stacked();
    (block(gl.n(), gl.h(), &gk), t0)
}

/// `P = F F⁺`, the projector onto the range of `F` in the ambient space.
fn factor_range_projector(f: &FactorSystem) -> tk::CMatrix {
    f.stacked() * f.pseudo_inverse()
}

fn c4_rn_round_trip() -> Outcome {
    let (mut done, mut skipped, mut worst_t, mut worst_k) = (0, 0, 0.0_f64, 0.0_f64);
    let mut seed = 4000u64;
    while done < 100 {
        let gl = separable_gram(seed, 8, 3);
        seed += 1;
        if !well_separated(&gl) {
            skipped += 1;
            continue;
        }
        let (gk, t0) = planted_k(&gl, seed ^ 0x77);
        let t = rn_operator(&gk, &gl).map_err(|e| format!("seed {}: {e}", seed - 1))?;
        let f = factorize(&gl, FactorMode::Eigen).unwrap();
        let p = factor_range_projector(&f);
        let err_t = tk::max_abs(&(t.operator().matrix() - &p * &t0 * &p));
        ensure(err_t <= 1e-8, || format!("seed {}: T error {err_t:e}", seed - 1))?;
        for i in 0..gl.n() {
            for j in 0..gl.n() {
                let r = reconstruct_both(&f, &t, i, j).unwrap();
                let err = tk::max_abs(&(&r.direct - gk.block(i, j)));
                ensure(err <= 1e-9, || format!("seed {}: block error {err:e}", seed - 1))?;
                worst_k = worst_k.max(err);
            }
        }
        worst_t = worst_t.max(err_t);
        done += 1;
    }
    Ok(format!(
        "100 instances ({skipped} without spectral gap skipped), T error {worst_t:.2e}, block error {worst_k:.2e}"
    ))
}

fn c5_order() -> Outcome {
    let mut negatives = 0;
    for idx in 0..200u64 {
        let seed = 5000 + idx;
        let gl = separable_gram(seed, 8, 3);
        let mut rng = tk::rng(seed ^ 0x55);
        let factor = rng.random_range(0.05..0.95);
        let engineered = idx < 50;
        let gk = if engineered {
            // violate the order along a random direction or by over-scaling
            if idx % 2 == 0 {
                gl.matrix() * c(1.0 + factor)
            } else {
                gl.matrix() + tk::random_psd(&mut rng, gl.dim(), 1) * c(factor)
            }
        } else {
            match idx % 3 {
                0 => gl.matrix() * c(factor),
                1 => planted_k(&gl, seed ^ 0x56).0.matrix().clone(),
                _ => {
                    let other = separable_gram(seed ^ 0x57, 8, 3);
                    if other.n() == gl.n() && other.h() == gl.h() {
                        other.matrix() * c(factor)
                    } else {
                        gl.matrix() * c(factor)
                    }
                }
            }
        };
        let gk = block(gl.n(), gl.h(), &gk);
        let verdict = check_order(&gk, &gl, DEFAULT_PSD_TOL).unwrap();
        let diff = gl.matrix() - gk.matrix();
        let oracle_min = tk::min_eigenvalue(&diff);
        let spread = tk::spectral_norm(&diff);
        let oracle_holds = oracle_min >= -DEFAULT_PSD_TOL * (1.0 + spread);
        ensure(verdict.holds == oracle_holds, || {
            format!("pair {idx}: verdict {} but oracle min eigenvalue {oracle_min:e}", verdict.holds)
        })?;
        if engineered {
            ensure(!verdict.holds, || format!("engineered pair {idx} was accepted"))?;
            negatives += 1;
        }
    }
    Ok(format!("200 pairs agree with the oracle, {negatives} engineered violations rejected"))
}

fn c6_aronszajn() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for idx in 0..100u64 {
        let seed = 6000 + idx;
        let gl = separable_gram(seed, 8, 3);
        let (gk, _) = planted_k(&gl, seed ^ 0x66);
        let coeffs = RkhsElement::new(tk::random_vector(&mut tk::rng(seed ^ 0x67), gl.dim()));
        let norms = aronszajn_norms(&coeffs, &gk, &gl).map_err(|e| format!("triple {idx}: {e}"))?;
        ensure(norms.norm_l <= norms.norm_k + 1e-9, || {
            format!("triple {idx}: {} > {}", norms.norm_l, norms.norm_k)
        })?;
        worst = worst.max(norms.norm_l - norms.norm_k);
    }
    Ok(format!("100 triples, max(norm_L − norm_K) = {worst:.2e}"))
}

fn c7_derived_process() -> Outcome {
    let (k, pts) = common::fixture_a();
    let gl = assemble_block_gram(&k, &pts).unwrap();
    let fl = factorize(&gl, FactorMode::Eigen).unwrap();
    let reference = rn_operator(&gl, &gl).unwrap();
    let half = HermitianMatrix::hermitize(&(factor_range_projector(&fl) * c(0.5))).unwrap();
    let t = RnOperator::new(half, reference.range_projector().clone(), 0.0).unwrap();
    let draws = derived_process(&fl, &t, N, 7).unwrap();
    let target = gl.matrix() * c(0.5);
    let band = covariance_band(&target);
    let err = tk::max_abs(&(draws.covariance_matrix() - &target));
    ensure(err <= band, || format!("error {err} > {band}"))?;
    Ok(format!("max entry error {err:.4} within {band:.4}"))
}

fn random_cp(seed: u64) -> (usize, usize, Vec<tk::CMatrix>, CpMap) {
    let mut rng = tk::rng(seed);
    let d = rng.random_range(1..=3);
    let h = rng.random_range(1..=3);
    let count = rng.random_range(1..=d * h);
    let ops = tk::random_kraus(&mut rng, d, h, count);
    let psi = CpMap::new(d, h, &tk::choi_from_kraus(d, h, &ops)).unwrap();
    (d, h, ops, psi)
}

fn c8_stinespring() -> Outcome {
    let (mut exact, mut mult) = (0.0_f64, 0.0_f64);
    for idx in 0..200u64 {
        let (d, h, _, psi) = random_cp(8000 + idx);
        let dil = stinespring(&psi).map_err(|e| format!("map {idx}: {e}"))?;
        let e = dil.exactness_defect(&psi);
        let m = dil.multiplicativity_defect();
        ensure(e <= 1e-9 && m <= 1e-9, || format!("map {idx}: exactness {e:e}, multiplicativity {m:e}"))?;
        let rank = tk::hermitian_rank(&tk::cp_gram(psi.choi().matrix(), d, h), 1e-12);
        let span = dil.span_dimension();
        let pruned = kraus_dilation(&psi).unwrap().pruned_dimension();
        ensure(dil.dim_k == rank && span == rank && pruned == rank, || {
            format!("map {idx}: dim_K {} rank {rank} span {span} pruned {pruned}", dil.dim_k)
        })?;
        exact = exact.max(e);
        mult = mult.max(m);
    }
    Ok(format!("200 maps, exactness {exact:.2e}, multiplicativity {mult:.2e}, dimensions agree"))
}

fn c9_cp_rn() -> Outcome {
    let (mut worst_rec, mut worst_comm) = (0.0_f64, 0.0_f64);
    for idx in 0..100u64 {
        let seed = 9000 + idx;
        let (d, h, ops, psi) = random_cp(seed);
        let kd = KrausDilation::from_kraus(d, h, &ops).unwrap();
        let t0 = tk::random_contraction(&mut tk::rng(seed ^ 0x99), kd.r);
        let lifted = tk::CMatrix::identity(d, d).kronecker(&t0);
        let phi = CpMap::from_fn(d, h, |a| kd.w.adjoint() * kd.pi(a) * &lifted * &kd.w).unwrap();
        let rn = cp_rn(&phi, &psi).map_err(|e| format!("instance {idx}: {e}"))?;
        ensure(rn.commutator_defect <= 1e-9, || {
            format!("instance {idx}: commutator defect {:e}", rn.commutator_defect)
        })?;
        let mut probes: Vec<tk::CMatrix> = (0..d * d).map(|p| tk::matrix_unit(d, p / d, p % d)).collect();
        probes.push(tk::random_matrix(&mut tk::rng(seed ^ 0x9a), d, d));
        for a in &probes {
            let expected = phi.apply(a).unwrap();
            let sandwich = tk::max_abs(&(rn.reconstruct_sandwich(a).unwrap() - &expected));
            let left = tk::max_abs(&(rn.reconstruct_left(a).unwrap() - &expected));
            ensure(sandwich <= 1e-8 && left <= 1e-8, || {
                format!("instance {idx}: sandwich {sandwich:e}, left {left:e}")
            })?;
            worst_rec = worst_rec.max(sandwich).max(left);
        }
        worst_comm = worst_comm.max(rn.commutator_defect);
    }
    Ok(format!("100 instances, reconstruction {worst_rec:.2e}, commutator {worst_comm:.2e}"))
}

fn c10_gp_decomposition() -> Outcome {
    let draws = gp_decompose(&CpMap::identity(2), N, 31).map_err(|e| e.to_string())?;
    let est = empirical_covariance(&draws, &unit(2, 0), &unit(2, 0), 0, 0).unwrap();
    let tol = 3.0 * (2.0 / N as f64).sqrt();
    let off = (est.re - 1.0).abs();
    ensure(off <= tol, || format!("estimate {} off by {off} > {tol}", est.re))?;
    Ok(format!("estimate {:.5} within {tol:.4} of 1", est.re))
}

struct Problem {
    kernel: OperatorKernel,
    points: Vec<SamplePoint>,
    data: tk::CVector,
    beta: f64,
}

fn random_problem(seed: u64) -> Problem {
    let mut rng = tk::rng(seed);
    let h = rng.random_range(1..=3);
    let n = rng.random_range(1..=8);
    Problem {
        kernel: common::random_separable(&mut rng, h),
        points: common::random_points(&mut rng, n, 1),
        data: tk::random_vector(&mut rng, n),
        beta: rng.random_range(0.05..1.0),
    }
}

fn density(seed: u64, h: usize) -> DensityOperator {
    DensityOperator::new(&tk::random_density(&mut tk::rng(seed), h)).unwrap()
}

fn c11_optimizer() -> Outcome {
    let (mut worst_a, mut worst_b) = (0.0_f64, 0.0_f64);
    for idx in 0..100u64 {
        let seed = 11_000 + idx;
        let p = random_problem(seed);
        let h = p.kernel.h();

        // (a) closed form against Σ|Gα − c|² + β α*Gα
        let g = gram_rho(&p.kernel, &p.points, &density(seed ^ 1, h)).unwrap();
        let sol = krr_solve(&g, &p.data, p.beta).unwrap();
        let fitted = g.matrix() * &sol.alpha;
        let direct = (&fitted - &p.data).norm_squared() + p.beta * sol.alpha.dotc(&fitted).re;
        let err_a = (sol.objective - direct).abs();
        ensure(err_a <= 1e-10, || format!("(a) instance {idx}: {err_a:e}"))?;
        worst_a = worst_a.max(err_a);

        // (b) gradient along a traceless Hermitian direction
        let obj = RhoObjective::new(&p.kernel, &p.points, &p.data, p.beta).unwrap();
        let rho = density(seed ^ 3, h);
        let grad = obj.gradient(&obj.solve(&rho).unwrap().alpha).unwrap();
        let mut delta = tk::random_hermitian(&mut tk::rng(seed ^ 4), h);
        let shift = delta.trace() / c(h as f64);
        delta -= tk::CMatrix::identity(h, h) * shift;
        let eps = 1e-5;
        let probe = |s: f64| {
            let m = rho.matrix() + &delta * c(s * eps);
            obj.solve_hermitian(&common::herm(&m)).unwrap().objective
        };
        let fd = (probe(1.0) - probe(-1.0)) / (2.0 * eps);
        let analytic = (grad.matrix() * &delta).trace().re;
        let err_b = (analytic - fd).abs();
        ensure(err_b <= 1e-5, || format!("(b) instance {idx}: analytic {analytic}, fd {fd}"))?;
        worst_b = worst_b.max(err_b);

        // (c) monotone trace
        let model = optimize_rho(&p.kernel, &p.points, &p.data, p.beta, 20, 1e-9).unwrap();
        ensure(model.objective_trace.windows(2).all(|w| w[1] <= w[0]), || {
            format!("(c) instance {idx}: trace {:?}", model.objective_trace)
        })?;
    }

    // (d) planted diag-kernel recovery
    let pts: Vec<SamplePoint> = (0..12).map(|i| SamplePoint::scalar(0.25 * i as f64)).collect();
    let kernel = OperatorKernel::separable(vec![
        SeparableTerm {
            kernel: ScalarKernel::Gaussian { width: 1.0 },
            coefficient: HermitianMatrix::from_real_diagonal(&[1.0, 0.0]),
        },
        SeparableTerm {
            kernel: ScalarKernel::Gaussian { width: 0.15 },
            coefficient: HermitianMatrix::from_real_diagonal(&[0.0, 1.0]),
        },
    ])
    .unwrap();
    let star = DensityOperator::new(&real_diag(&[1.0, 0.0])).unwrap();
    let mut rng = tk::rng(404);
    let alpha_star = tk::CVector::from_fn(pts.len(), |_, _| c(rng.random_range(0.5..1.5)));
    let data = gram_rho(&kernel, &pts, &star).unwrap().matrix() * alpha_star;
    let model = optimize_rho(&kernel, &pts, &data, 1e-2, 50, 1e-10).unwrap();
    ensure(model.objective_trace.windows(2).all(|w| w[1] <= w[0]), || "(d) trace increased".into())?;
    let weight = model.rho.matrix()[(1, 1)].re;
    ensure(weight <= 0.1 && model.iterations <= 50, || {
        format!("(d) Trace(ρ·diag(0,1)) = {weight} after {} iterations", model.iterations)
    })?;
    Ok(format!(
        "(a) {worst_a:.2e} (b) {worst_b:.2e} (c) monotone on 101 runs (d) weight {weight:.2e} in {} iterations",
        model.iterations
    ))
}

fn c12_determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_opkernel");
    let jobs = Path::new(env!("CARGO_MANIFEST_DIR")).join("jobs");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut count = 0;
    let mut entries: Vec<_> = std::fs::read_dir(&jobs)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    for job in entries {
        for seed in [None, Some("12345")] {
            let mut outputs = Vec::new();
            for run in 0..2 {
                let out = dir.path().join(format!("run{run}.json"));
                let mut cmd = Command::new(exe);
                cmd.arg("--job").arg(&job).arg("--out").arg(&out);
                if let Some(s) = seed {
                    cmd.args(["--seed", s]);
                }
                cmd.output().map_err(|e| e.to_string())?;
                outputs.push(std::fs::read(&out).map_err(|e| format!("{}: {e}", job.display()))?);
            }
            ensure(outputs[0] == outputs[1], || format!("{} differs between runs", job.display()))?;
            count += 1;
        }
    }
    Ok(format!("{count} job/seed combinations byte-identical across runs"))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "factorization", limit: Some(Duration::from_secs(10)), check: c1_factorization },
        Criterion { id: 2, name: "factor uniqueness", limit: None, check: c2_uniqueness },
        Criterion { id: 3, name: "GP covariance", limit: Some(Duration::from_secs(30)), check: c3_gp_covariance },
        Criterion { id: 4, name: "Radon-Nikodym round trip", limit: None, check: c4_rn_round_trip },
        Criterion { id: 5, name: "order equivalence", limit: None, check: c5_order },
        Criterion { id: 6, name: "Aronszajn contraction", limit: None, check: c6_aronszajn },
        Criterion { id: 7, name: "derived process", limit: None, check: c7_derived_process },
        Criterion { id: 8, name: "Stinespring dilation", limit: Some(Duration::from_secs(60)), check: c8_stinespring },
        Criterion { id: 9, name: "CP Radon-Nikodym", limit: None, check: c9_cp_rn },
        Criterion { id: 10, name: "GP decomposition of CP maps", limit: None, check: c10_gp_decomposition },
        Criterion { id: 11, name: "optimizer", limit: Some(Duration::from_secs(30)), check: c11_optimizer },
        Criterion { id: 12, name: "CLI determinism", limit: None, check: c12_determinism },
    ];
    let mut failed = 0;
    for cr in &criteria {
        let start = Instant::now();
        let outcome = (cr.check)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, cr.limit) {
            (Ok(detail), Some(limit)) if elapsed > limit => {
                Err(format!("{detail}; runtime {elapsed:.2?} exceeds {limit:?}"))
            }
            (o, _) => o,
        };
        let timing = match cr.limit {
            Some(limit) => format!(" [{elapsed:.2?} / {limit:?}]"),
            None => format!(" [{elapsed:.2?}]"),
        };
        match outcome {
            Ok(detail) => println!("criterion {:>2} {}: PASS{timing} {detail}", cr.id, cr.name),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {}: FAIL{timing} {why}", cr.id, cr.name);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
