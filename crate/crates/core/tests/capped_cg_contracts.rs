mod common;

use common::{dot, matvec, norm, planted};
use nalgebra::{DMatrix, DVector};
use ncg_core::capped_cg::{capped_cg, j_cap, CappedCgParams, DType, DerivedParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spectrum(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(lo..hi)).collect()
}

fn damped_residual(h: &DMatrix<f64>, d: &[f64], g: &[f64], eps: f64) -> f64 {
    let hd = matvec(h, d);
    let r: Vec<f64> = hd.iter().zip(d).zip(g).map(|((a, b), c)| a + 2.0 * eps * b + c).collect();
    norm(&r)
}

#[test]
fn dense_solution_matches_factorization() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let eigs = spectrum(&mut rng, 10, 1.0, 5.0);
    let h = planted(&eigs, &mut rng);
    let g = common::gaussian_vec(10, &mut rng);
    let (eps, zeta) = (0.01, 0.5);
    let r = capped_cg(&h, &g, &CappedCgParams::new(eps, zeta)).unwrap();
    assert_eq!(r.d_type, DType::Sol);
    let hbar = &h + DMatrix::identity(10, 10) * (2.0 * eps);
    let dstar = hbar.cholesky().unwrap().solve(&(-DVector::from_row_slice(&g)));
    let diff: Vec<f64> = r.d.iter().zip(dstar.iter()).map(|(a, b)| a - b).collect();
    assert!(norm(&diff) <= 1e-3 * dstar.norm(), "{}", norm(&diff));
    assert!(damped_residual(&h, &r.d, &g, eps) <= 0.5 * eps * zeta * norm(&r.d));
}

#[test]
fn planted_negative_direction_has_curvature() {
    let mut diag = vec![1.0; 6];
    diag[0] = -3.0;
    let h = DMatrix::from_diagonal(&DVector::from_row_slice(&diag));
    let g = [0.3, -1.0, 0.5, 2.0, 0.1, -0.7];
    let r = capped_cg(&h, &g, &CappedCgParams::new(0.9, 0.5)).unwrap();
    assert_eq!(r.d_type, DType::Nc);
    let d = &r.d;
    assert!(dot(d, &matvec(&h, d)) <= -0.9 * dot(d, d));
    assert!((dot(d, &matvec(&h, d)) - r.curvature).abs() <= 1e-10 * dot(d, d).max(1.0));
}

#[test]
fn iteration_count_grows_like_inverse_sqrt_eps() {
    let zeta = 0.5;
    let m = 1.0;
    let eps = [1e-1, 1e-2, 1e-3, 1e-4];
    let js: Vec<f64> = eps.iter().map(|e| j_cap(m, *e, zeta) as f64).collect();
    // J / (ε^{-1/2} |ln ε|) should stay within a constant band
    let ratios: Vec<f64> = eps
        .iter()
        .zip(&js)
        .map(|(e, j)| j / (e.powf(-0.5) * e.ln().abs()))
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0_f64), |(a, b), r| (a.min(*r), b.max(*r)));
    assert!(hi / lo < 3.0, "{ratios:?}");
    // log-log slope of J against 1/ε between 1/2 and 1
    let slope = (js[3].ln() - js[0].ln()) / ((1e-1f64).ln() - (1e-4f64).ln());
    assert!(slope > 0.5 && slope < 1.0, "slope {slope}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sol_contract_when_curvature_exceeds_eps(seed in any::<u64>(), d in 2usize..30, eps in 0.01f64..0.5, zeta in 0.1f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eigs = spectrum(&mut rng, d, eps, 10.0);
        let h = planted(&eigs, &mut rng);
        let g = common::gaussian_vec(d, &mut rng);
        let r = capped_cg(&h, &g, &CappedCgParams::new(eps, zeta)).unwrap();
        prop_assert_eq!(r.d_type, DType::Sol);
        let dn = norm(&r.d);
        prop_assert!(damped_residual(&h, &r.d, &g, eps) <= 0.5 * eps * zeta * dn);
        prop_assert!(dot(&r.d, &matvec(&h, &r.d)) >= -eps * dn * dn);
        prop_assert!(dn <= 1.1 / eps * norm(&g));
        prop_assert!(r.iterations <= d.min(j_cap(r.m_final(), eps, zeta)));
    }

    #[test]
    fn nc_contract_on_indefinite(seed in any::<u64>(), d in 2usize..30, eps in 0.01f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut eigs = spectrum(&mut rng, d, -5.0, 5.0);
        eigs[0] = -2.0 * eps - rng.random_range(0.0..3.0);
        let h = planted(&eigs, &mut rng);
        let g = common::gaussian_vec(d, &mut rng);
        let r = capped_cg(&h, &g, &CappedCgParams::new(eps, 0.5)).unwrap();
        if r.d_type == DType::Nc {
            let dd = dot(&r.d, &r.d);
            prop_assert!(dot(&r.d, &matvec(&h, &r.d)) < -eps * dd);
        }
        prop_assert!(r.iterations <= d.min(j_cap(r.m_final(), eps, 0.5)));
    }

    #[test]
    fn curvature_bound_dominates_observed_ratios(seed in any::<u64>(), d in 2usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eigs = spectrum(&mut rng, d, 0.5, 4.0);
        let h = planted(&eigs, &mut rng);
        let g = common::gaussian_vec(d, &mut rng);
        let r = capped_cg(&h, &g, &CappedCgParams::new(0.1, 0.5)).unwrap();
        let lmax = eigs.iter().cloned().fold(0.0, f64::max);
        prop_assert!(r.m_final() <= lmax * (1.0 + 1e-10));
        let p = DerivedParams::new(r.m_final(), 0.1, 0.5);
        prop_assert_eq!(p, r.params);
    }

    #[test]
    fn j_cap_is_minimal(m in 0.0f64..1e3, eps in 1e-4f64..0.99, zeta in 0.01f64..0.99) {
        let j = j_cap(m, eps, zeta);
        let p = DerivedParams::new(m, eps, zeta);
        prop_assert!(p.envelope(j) <= p.zeta_hat);
        prop_assert!(j == 0 || p.envelope(j - 1) > p.zeta_hat);
    }
}
