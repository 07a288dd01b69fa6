#![allow(dead_code)]

use num_complex::Complex64;
use opkernel::kernels::{OperatorKernel, SamplePoint, ScalarKernel, SeparableTerm};
use opkernel::numerics::HermitianMatrix;
use opkernel_testkit as tk;
use rand::Rng;

pub fn herm(m: &tk::CMatrix) -> HermitianMatrix {
    HermitianMatrix::hermitize(m).unwrap()
}

pub fn random_scalar_kernel(rng: &mut impl Rng) -> ScalarKernel {
    match rng.random_range(0..4) {
        0 => ScalarKernel::Gaussian {
            width: rng.random_range(0.5..2.0),
        },
        1 => ScalarKernel::Laplacian {
            scale: rng.random_range(0.5..2.0),
        },
        2 => ScalarKernel::Polynomial {
            degree: rng.random_range(1..4),
            offset: rng.random_range(0.5..1.5),
        },
        _ => ScalarKernel::Linear,
    }
}

/// Separable kernel with 1 to 3 terms and random PSD coefficients.
pub fn random_separable(rng: &mut impl Rng, h: usize) -> OperatorKernel {
    let terms = rng.random_range(1..=3);
    OperatorKernel::separable(
        (0..terms)
            .map(|_| {
                let rank = rng.random_range(1..=h);
                let p = tk::random_psd(rng, h, rank);
                let scale = tk::max_eigenvalue(&p);
                SeparableTerm {
                    kernel: random_scalar_kernel(rng),
                    coefficient: herm(&(p / Complex64::new(scale, 0.0))),
                }
            })
            .collect(),
    )
    .unwrap()
}

pub fn random_points(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<SamplePoint> {
    tk::separated_points(rng, n, dim, 2.0 + 0.4 * n as f64, 0.25)
        .into_iter()
        .map(|p| SamplePoint::new(p).unwrap())
        .collect()
}

pub fn fixture_a() -> (OperatorKernel, Vec<SamplePoint>) {
    let k = OperatorKernel::scalar_times(ScalarKernel::Gaussian { width: 1.0 }, HermitianMatrix::identity(2)).unwrap();
    (k, vec![SamplePoint::scalar(0.0), SamplePoint::scalar(1.0)])
}
