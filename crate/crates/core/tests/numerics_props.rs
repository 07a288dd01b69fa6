use num_complex::Complex64;
use opkernel::numerics::{self, pinv, pivoted_cholesky_factor, psd_check, psd_sqrt, HermitianMatrix};
use opkernel_testkit as tk;
use proptest::prelude::*;

fn herm(m: &tk::CMatrix) -> HermitianMatrix {
    HermitianMatrix::hermitize(m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hermitize_is_idempotent(seed in any::<u64>(), n in 1usize..7) {
        let m = tk::random_matrix(&mut tk::rng(seed), n, n);
        let once = herm(&m);
        let twice = herm(once.matrix());
        prop_assert_eq!(once.matrix(), twice.matrix());
        prop_assert_eq!(twice.defect(), 0.0);
        prop_assert!(tk::max_abs(&(once.matrix() - once.matrix().adjoint())) == 0.0);
    }

    #[test]
    fn psd_check_matches_jacobi_oracle(seed in any::<u64>(), n in 1usize..7, shift in -2.0f64..2.0) {
        let mut rng = tk::rng(seed);
        let m = tk::random_hermitian(&mut rng, n) + tk::CMatrix::identity(n, n) * tk::c(shift, 0.0);
        let oracle = tk::min_eigenvalue(&m);
        let v = psd_check(&herm(&m), 1e-10);
        prop_assert!((v.min_eigenvalue - oracle).abs() <= 1e-12 * (1.0 + oracle.abs() + tk::spectral_norm(&m)));
        if oracle.abs() > 1e-8 {
            prop_assert_eq!(v.is_psd, oracle > 0.0);
        }
    }

    #[test]
    fn psd_sqrt_squares_back(seed in any::<u64>(), n in 1usize..7, rank in 1usize..7) {
        let p = tk::random_psd(&mut tk::rng(seed), n, rank.min(n));
        let r = psd_sqrt(&herm(&p), 1e-10).unwrap();
        let scale = 1.0 + tk::spectral_norm(&p);
        prop_assert!(tk::max_abs(&(r.matrix() * r.matrix() - &p)) <= 1e-12 * scale);
        prop_assert!(tk::min_eigenvalue(r.matrix()) >= -1e-7 * scale.sqrt());
    }

    #[test]
    fn pinv_matches_oracle_on_exact_low_rank(seed in any::<u64>(), n in 1usize..7, rank in 1usize..7) {
        let rank = rank.min(n);
        let p = tk::random_psd(&mut tk::rng(seed), n, rank);
        prop_assume!(tk::has_spectral_gap(&p, 1e-14, 1e-8));
        let pi = pinv(&herm(&p), numerics::DEFAULT_RANK_TOL);
        prop_assert_eq!(pi.rank, rank);
        let q = pi.pseudo_inverse.matrix();
        let oracle = tk::hermitian_pinv(&p, 1e-12);
        let scale = tk::spectral_norm(&oracle).max(1.0);
        prop_assert!(tk::max_abs(&(q - &oracle)) <= 1e-8 * scale);
        prop_assert!(tk::max_abs(&(&p * q * &p - &p)) <= 1e-10 * (1.0 + tk::spectral_norm(&p)));
        let proj = pi.range_projector.matrix();
        prop_assert!(tk::max_abs(&(proj * proj - proj)) <= 1e-10);
    }

    #[test]
    fn pivoted_cholesky_reconstructs(seed in any::<u64>(), n in 1usize..8, rank in 1usize..8) {
        let p = tk::random_psd(&mut tk::rng(seed), n, rank.min(n));
        let (f, r) = pivoted_cholesky_factor(&herm(&p), numerics::DEFAULT_RANK_TOL);
        prop_assert_eq!(f.shape(), (n, n));
        prop_assert!(r <= rank.min(n));
        prop_assert!(tk::max_abs(&(f.adjoint() * &f - &p)) <= 1e-10 * (1.0 + tk::spectral_norm(&p)));
    }
}

#[test]
fn scaled_identity_has_exact_root() {
    let m = HermitianMatrix::identity(3).scaled(4.0);
    let r = psd_sqrt(&m, 1e-10).unwrap();
    assert_eq!(r.matrix(), &(tk::CMatrix::identity(3, 3) * Complex64::new(2.0, 0.0)));
}
