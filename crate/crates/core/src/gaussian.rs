//! `H`-valued Gaussian processes `W(t) = Σ_i (V(t)* φ_i) Z_i` on the sample points.
//!
//! # Random stream
//!
//! Draw `k` of a run with seed `s` reads its own sub-stream: a ChaCha20 generator
//! seeded with `ChaCha20Rng::seed_from_u64(s)` and switched to stream number `k`
//! with `set_stream(k)`. Standard normals come from Box–Muller pairs. Each pair
//! consumes two consecutive `u64` words `x, y`:
//!
//! ```text
//! u1 = 1 − (x >> 11) · 2⁻⁵³        ∈ (0, 1]
//! u2 = (y >> 11) · 2⁻⁵³            ∈ [0, 1)
//! z0 = √(−2 ln u1) · cos(2π u2)
//! z1 = √(−2 ln u1) · sin(2π u2)
//! ```
//!
//! A draw needing `r` variables takes `⌈r/2⌉` pairs in order `z0, z1, z0, …` and
//! drops the unused tail. Draws are therefore independent of scheduling and can
//! be produced in parallel.

use num_complex::Complex64;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{psd_sqrt, CMatrix, CVector, HermitianMatrix, DEFAULT_PSD_TOL};
use crate::ordering::RnOperator;
use crate::rkhs::FactorSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnbMode {
    /// `φ_i = e_i` in the factor coordinates.
    Standard,
    /// `φ_i` = eigenvectors of `F F*`.
    Eigen,
}

/// Seeded source of real standard normals for one draw.
pub struct NormalStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, draw_index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(draw_index);
        Self { rng, spare: None }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = 1.0 - (self.rng.next_u64() >> 11) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for z in out.iter_mut() {
            *z = self.next_normal();
        }
    }
}

/// Samples `W(s_i)` for every draw, laid out as `(draw, point, coordinate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDraw {
    pub n_draws: usize,
    pub n_points: usize,
    pub h: usize,
    pub seed: u64,
    pub onb_mode: OnbMode,
    samples: Vec<Complex64>,
}

impl GaussianDraw {
    /// `W(s_point)` in draw `draw`.
    pub fn sample(&self, draw: usize, point: usize) -> &[Complex64] {
        let start = (draw * self.n_points + point) * self.h;
        &self.samples[start..start + self.h]
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// All entries `E[⟨e_a, W(s_i)⟩ ⟨W(s_j), e_b⟩]` as an `nh × nh` matrix.
    pub fn covariance_matrix(&self) -> CMatrix {
        let dim = self.n_points * self.h;
        let mut acc = CMatrix::zeros(dim, dim);
        for d in 0..self.n_draws {
            let w = &self.samples[d * dim..(d + 1) * dim];
            for p in 0..dim {
                for q in 0..dim {
                    acc[(p, q)] += w[p] * w[q].conj();
                }
            }
        }
        acc / Complex64::new(self.n_draws as f64, 0.0)
    }

    fn check(&self, a: &CVector, b: &CVector, i: usize, j: usize) -> Result<()> {
        for idx in [i, j] {
            if idx >= self.n_points {
                return Err(Error::IndexOutOfRange {
                    index: idx,
                    len: self.n_points,
                });
            }
        }
        if a.len() != self.h || b.len() != self.h {
            return Err(Error::DimensionMismatch(format!(
                "vectors of length {} and {}, expected {}",
                a.len(),
                b.len(),
                self.h
            )));
        }
        Ok(())
    }
}

fn inner(a: &CVector, w: &[Complex64]) -> Complex64 {
    a.iter().zip(w).map(|(x, y)| x.conj() * y).sum()
}

/// Sample mean of `⟨a, W(s_i)⟩ ⟨W(s_j), b⟩`.
pub fn empirical_covariance(draws: &GaussianDraw, a: &CVector, b: &CVector, i: usize, j: usize) -> Result<Complex64> {
    draws.check(a, b, i, j)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for d in 0..draws.n_draws {
        let left = inner(a, draws.sample(d, i));
        let right = inner(b, draws.sample(d, j)).conj();
        acc += left * right;
    }
    Ok(acc / draws.n_draws as f64)
}

/// Diagnostic: sample mean of `conj⟨a, W(s_i)⟩ · ⟨W(s_j), b⟩`.
pub fn conjugated_covariance(draws: &GaussianDraw, a: &CVector, b: &CVector, i: usize, j: usize) -> Result<Complex64> {
    draws.check(a, b, i, j)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for d in 0..draws.n_draws {
        let left = inner(a, draws.sample(d, i)).conj();
        let right = inner(b, draws.sample(d, j)).conj();
        acc += left * right;
    }
    Ok(acc / draws.n_draws as f64)
}

/// Draws `W(t) = Σ_i (V(t)* φ_i) Z_i` with real i.i.d. `Z_i ~ N(0, 1)`.
pub fn sample_gp(factors: &FactorSystem, n_draws: usize, seed: u64, onb_mode: OnbMode) -> Result<GaussianDraw> {
    let f_adj = factors.stacked().adjoint();
    let map = match onb_mode {
        OnbMode::Standard => f_adj,
        OnbMode::Eigen => {
            let frame = HermitianMatrix::hermitize(&(factors.stacked() * factors.stacked().adjoint()))?;
            f_adj * frame.eigen().eigenvectors
        }
    };
    draw_with_map(&map, factors.n_points(), factors.h(), n_draws, seed, onb_mode)
}

/// `W_K(t) = Σ_i (V_L(t)* T^{1/2} φ_i) Z_i`, standard basis.
pub fn derived_process(factors_l: &FactorSystem, t: &RnOperator, n_draws: usize, seed: u64) -> Result<GaussianDraw> {
    let t_mat = t.operator();
    if t_mat.dim() != factors_l.rank() {
        return Err(Error::DimensionMismatch(format!(
            "T acts on dimension {}, factor system has r = {}",
            t_mat.dim(),
            factors_l.rank()
        )));
    }
    let root = psd_sqrt(t_mat, DEFAULT_PSD_TOL)?;
    let f_adj = factors_l.stacked().adjoint();
    let r = factors_l.rank();
    let map = if root.matrix() == &CMatrix::identity(r, r) {
        f_adj
    } else {
        f_adj * root.matrix()
    };
    draw_with_map(&map, factors_l.n_points(), factors_l.h(), n_draws, seed, OnbMode::Standard)
}

/// Each draw is `map · z` for a fresh real normal vector `z`.
fn draw_with_map(
    map: &CMatrix,
    n_points: usize,
    h: usize,
    n_draws: usize,
    seed: u64,
    onb_mode: OnbMode,
) -> Result<GaussianDraw> {
    if n_draws == 0 {
        return Err(Error::InvalidParameter("n_draws must be at least 1".into()));
    }
    let (dim, r) = map.shape();
    debug_assert_eq!(dim, n_points * h);
    let per_draw: Vec<Vec<Complex64>> = (0..n_draws)
        .into_par_iter()
        .map(|d| {
            let mut z = vec![0.0; r];
            NormalStream::new(seed, d as u64).fill(&mut z);
            (0..dim)
                .map(|k| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (i, &zi) in z.iter().enumerate() {
                        acc += map[(k, i)] * zi;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(GaussianDraw {
        n_draws,
        n_points,
        h,
        seed,
        onb_mode,
        samples: per_draw.into_iter().flatten().collect(),
    })
}
