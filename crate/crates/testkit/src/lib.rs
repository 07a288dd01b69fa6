//! Reference computations and random instances for tests.
//!
//! Everything here works on plain nalgebra matrices. Spectral quantities come
//! from a cyclic Jacobi solver on the real embedding
//! `A + iB ↦ [[A, −B], [B, A]]`, independent of the LAPACK-style routines the
//! library itself uses.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Real symmetric `2n × 2n` embedding of an `n × n` complex matrix.
pub fn embed(m: &CMatrix) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = m[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Inverse of [`embed`] for matrices in its image.
pub fn unembed(r: &DMatrix<f64>) -> CMatrix {
    let n = r.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| c(r[(i, j)], r[(i + n, j)]))
}

/// Cyclic Jacobi eigen-solver for a real symmetric matrix.
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns.
pub fn jacobi_eigh(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = cs * akp - sn * akq;
                    a[(k, q)] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = cs * apk - sn * aqk;
                    a[(q, k)] = sn * apk + cs * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = cs * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Eigenvalues of a Hermitian matrix, descending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let (mut vals, _) = jacobi_eigh(&embed(&hermitian_part(m)));
    vals.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    // every eigenvalue of the embedding appears twice
    vals.into_iter().step_by(2).collect()
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    *hermitian_eigenvalues(m).last().expect("non-empty matrix")
}

pub fn max_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m)[0]
}

/// Largest singular value, via the eigenvalues of `M* M`.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    max_eigenvalue(&(m.adjoint() * m)).max(0.0).sqrt()
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// `f(M)` for Hermitian `M`.
pub fn spectral_fn(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = jacobi_eigh(&embed(&hermitian_part(m)));
    let d = DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&x| f(x))));
    unembed(&(&vecs * d * vecs.transpose()))
}

/// Moore–Penrose inverse of a Hermitian matrix, dropping eigenvalues at or
/// below `rel_tol · λ_max`.
pub fn hermitian_pinv(m: &CMatrix, rel_tol: f64) -> CMatrix {
    let cut = rel_tol * hermitian_eigenvalues(m).iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    spectral_fn(m, |x| if x.abs() > cut { 1.0 / x } else { 0.0 })
}

pub fn hermitian_sqrt(m: &CMatrix) -> CMatrix {
    spectral_fn(m, |x| x.max(0.0).sqrt())
}

/// Number of eigenvalues above `rel_tol · λ_max`.
pub fn hermitian_rank(m: &CMatrix, rel_tol: f64) -> usize {
    let vals = hermitian_eigenvalues(m);
    let cut = rel_tol * vals.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    vals.iter().filter(|&&x| x > cut).count()
}

/// True when no eigenvalue of `m` has `lo < |λ| / |λ|_max < hi`.
///
/// Factorizations truncate at a relative threshold inside such a band, so
/// instances without a gap there have factors determined only to about
/// `√(λ_max · hi)`.
pub fn has_spectral_gap(m: &CMatrix, lo: f64, hi: f64) -> bool {
    let vals = hermitian_eigenvalues(m);
    let top = vals.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if top == 0.0 {
        return true;
    }
    vals.iter().all(|x| {
        let r = x.abs() / top;
        r <= lo || r >= hi
    })
}

/// Column rank by modified Gram–Schmidt with re-orthogonalisation.
pub fn gram_schmidt_rank(cols: &CMatrix, rel_tol: f64) -> usize {
    let scale = (0..cols.ncols()).map(|j| cols.column(j).norm()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let mut basis: Vec<CVector> = Vec::new();
    for j in 0..cols.ncols() {
        let mut v = cols.column(j).into_owned();
        for _ in 0..2 {
            for q in &basis {
                let p = q.dotc(&v);
                v -= q * p;
            }
        }
        let norm = v.norm();
        if norm > rel_tol * scale {
            basis.push(v / c(norm, 0.0));
        }
    }
    basis.len()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |a, z| a.max(z.norm()))
}

pub fn matrix_unit(d: usize, i: usize, j: usize) -> CMatrix {
    let mut e = CMatrix::zeros(d, d);
    e[(i, j)] = c(1.0, 0.0);
    e
}

/// `Choi(ψ)` for `ψ(A) = Σ V_k A V_k*` by direct evaluation on matrix units.
pub fn choi_from_kraus(d: usize, h: usize, ops: &[CMatrix]) -> CMatrix {
    let mut choi = CMatrix::zeros(d * h, d * h);
    for i in 0..d {
        for j in 0..d {
            let e = matrix_unit(d, i, j);
            let mut block = CMatrix::zeros(h, h);
            for v in ops {
                block += v * &e * v.adjoint();
            }
            choi.view_mut((i * h, j * h), (h, h)).copy_from(&block);
        }
    }
    choi
}

/// `ψ(A)` from the Choi blocks.
pub fn apply_choi(choi: &CMatrix, d: usize, h: usize, a: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(h, h);
    for i in 0..d {
        for j in 0..d {
            out += choi.view((i * h, j * h), (h, h)) * a[(i, j)];
        }
    }
    out
}

/// Block Gram of `K(A, B) = ψ(A* B)` over the matrix units (`E_ij` at `i·d + j`),
/// evaluated entry by entry.
pub fn cp_gram(choi: &CMatrix, d: usize, h: usize) -> CMatrix {
    let n = d * d;
    let mut g = CMatrix::zeros(n * h, n * h);
    for p in 0..n {
        for q in 0..n {
            let a = matrix_unit(d, p / d, p % d);
            let b = matrix_unit(d, q / d, q % d);
            let block = apply_choi(choi, d, h, &(a.adjoint() * b));
            g.view_mut((p * h, q * h), (h, h)).copy_from(&block);
        }
    }
    g
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Entries with independent standard normal real and imaginary parts.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| c(gaussian(rng), gaussian(rng)))
}

pub fn random_vector(rng: &mut impl Rng, len: usize) -> CVector {
    CVector::from_fn(len, |_, _| c(gaussian(rng), gaussian(rng)))
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    hermitian_part(&random_matrix(rng, n, n))
}

/// `A A*` with `A` of size `n × rank`.
pub fn random_psd(rng: &mut impl Rng, n: usize, rank: usize) -> CMatrix {
    let a = random_matrix(rng, n, rank);
    hermitian_part(&(&a * a.adjoint()))
}

/// Hermitian `T` with spectrum drawn uniformly from `[0, 1]`.
pub fn random_contraction(rng: &mut impl Rng, n: usize) -> CMatrix {
    let u = random_unitary(rng, n);
    let d = CMatrix::from_diagonal(&CVector::from_fn(n, |_, _| c(rng.random::<f64>(), 0.0)));
    hermitian_part(&(&u * d * u.adjoint()))
}

/// Haar-like unitary from the QR factorisation of a Gaussian matrix.
pub fn random_unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
    let m = random_matrix(rng, n, n);
    let qr = m.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMatrix::from_diagonal(&CVector::from_fn(n, |i, _| {
        let z = r[(i, i)];
        if z.norm() == 0.0 {
            c(1.0, 0.0)
        } else {
            z / z.norm()
        }
    }));
    q * phases
}

pub fn random_density(rng: &mut impl Rng, h: usize) -> CMatrix {
    let p = random_psd(rng, h, h);
    let t = p.trace();
    p / t
}

/// `count` Kraus operators of size `h × d`.
pub fn random_kraus(rng: &mut impl Rng, d: usize, h: usize, count: usize) -> Vec<CMatrix> {
    (0..count).map(|_| random_matrix(rng, h, d)).collect()
}

/// Points in `[0, span)^dim` at pairwise distance at least `min_sep`.
pub fn separated_points(rng: &mut impl Rng, n: usize, dim: usize, span: f64, min_sep: f64) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut attempts = 0;
    while pts.len() < n {
        attempts += 1;
        assert!(attempts < 100_000, "cannot place {n} points with separation {min_sep}");
        let p: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * span).collect();
        let ok = pts.iter().all(|q| {
            let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= min_sep
        });
        if ok {
            pts.push(p);
        }
    }
    pts
}

/// Scalar Gaussian Gram `exp(−|x_i − x_j|² / 2σ²)`.
pub fn gaussian_gram(points: &[Vec<f64>], width: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (2.0 * width * width)).exp()
    })
}

/// Kronecker product `A ⊗ B` of a real scalar Gram with a complex block.
pub fn kron_real(a: &DMatrix<f64>, b: &CMatrix) -> CMatrix {
    let (n, h) = (a.nrows(), b.nrows());
    CMatrix::from_fn(n * h, n * h, |p, q| b[(p % h, q % h)] * a[(p / h, q / h)])
}
