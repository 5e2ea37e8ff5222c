mod common;

use common::{fd_grad, norm, rel_err};
use ncg_core::linalg::{assemble, sym_spectral_norm};
use ncg_core::{FiniteSum, IndexSet, Link, NlsProblem, ObjectiveOracle, SyntheticSaddle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LINKS: [Link; 3] = [Link::Sigmoid, Link::Tanh, Link::Welsch { alpha: 1.0 }];

fn instance(seed: u64, link: Link) -> (ObjectiveOracle, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..20);
    let d = rng.random_range(2..12);
    let p = NlsProblem::synthetic(n, d, link, &mut rng);
    let x = common::gaussian_vec(d, &mut rng);
    let v = common::gaussian_vec(d, &mut rng);
    (ObjectiveOracle::new(p), x, v)
}

#[test]
fn gradients_match_central_differences() {
    for link in LINKS {
        for seed in 0..100 {
            let (o, x, _) = instance(seed, link);
            let g = o.eval_grad(&x, &IndexSet::All).unwrap();
            let f = |y: &[f64]| o.eval_f(y, &IndexSet::All).unwrap();
            let fd = fd_grad(&f, &x, 1e-6);
            let err = rel_err(&g, &fd);
            assert!(err <= 1e-6 || norm(&g) < 1e-8, "{link:?} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn hessian_products_match_gradient_differences() {
    for link in LINKS {
        for seed in 0..100 {
            let (o, x, v) = instance(seed, link);
            let hv = o.eval_hvp(&x, &v, &IndexSet::All).unwrap();
            let h = 1e-5;
            let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
            let gp = o.eval_grad(&xp, &IndexSet::All).unwrap();
            let gm = o.eval_grad(&xm, &IndexSet::All).unwrap();
            let fd: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let err = rel_err(&hv, &fd);
            assert!(err <= 1e-5 || norm(&hv) < 1e-8, "{link:?} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn saddle_derivatives_match_differences() {
    let s = SyntheticSaddle::with_spectrum(vec![-2.0, 0.5, 1.0, 3.0], 0.7).unwrap();
    let o = ObjectiveOracle::new(s);
    let x = [0.3, -1.1, 0.8, 0.05];
    let g = o.eval_grad(&x, &IndexSet::All).unwrap();
    let f = |y: &[f64]| o.eval_f(y, &IndexSet::All).unwrap();
    assert!(rel_err(&g, &fd_grad(&f, &x, 1e-6)) < 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hessian_is_symmetric_and_linear(seed in any::<u64>(), li in 0usize..3, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (o, x, v) = instance(seed, LINKS[li]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let w = common::gaussian_vec(x.len(), &mut rng);
        let hv = o.eval_hvp(&x, &v, &IndexSet::All).unwrap();
        let hw = o.eval_hvp(&x, &w, &IndexSet::All).unwrap();
        let lhs = common::dot(&w, &hv);
        let rhs = common::dot(&v, &hw);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        let comb: Vec<f64> = v.iter().zip(&w).map(|(p, q)| a * p + b * q).collect();
        let hc = o.eval_hvp(&x, &comb, &IndexSet::All).unwrap();
        let expect: Vec<f64> = hv.iter().zip(&hw).map(|(p, q)| a * p + b * q).collect();
        let diff: Vec<f64> = hc.iter().zip(&expect).map(|(p, q)| p - q).collect();
        prop_assert!(norm(&diff) <= 1e-10 * (1.0 + norm(&expect)));
    }

    #[test]
    fn component_bounds_hold_pointwise(seed in any::<u64>(), li in 0usize..3, scale in 0.1f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = NlsProblem::synthetic(8, 6, LINKS[li], &mut rng);
        let c = p.constants();
        let x: Vec<f64> = common::gaussian_vec(6, &mut rng).iter().map(|v| v * scale).collect();
        for i in 0..p.rows() {
            let mut g = vec![0.0; 6];
            p.add_component_grad(i, &x, 1.0, &mut g);
            prop_assert!(norm(&g) <= c.k_g * (1.0 + 1e-12));
            let single = p.select_rows(&[i]).unwrap();
            let o = ObjectiveOracle::new(single);
            let hm = assemble(&o.hessian(&x, IndexSet::All).unwrap()).unwrap();
            prop_assert!(sym_spectral_norm(&hm) <= c.k_h * (1.0 + 1e-12));
        }
    }

    #[test]
    fn hessian_lipschitz_constant_holds(seed in any::<u64>(), li in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(2..30);
        let p = NlsProblem::synthetic(10, d, LINKS[li], &mut rng);
        let l_h = p.constants().l_h;
        let o = ObjectiveOracle::new(p);
        let x = common::gaussian_vec(d, &mut rng);
        let y: Vec<f64> = x.iter().map(|v| v + 0.3 * rng.random_range(-1.0..1.0)).collect();
        let hx = assemble(&o.hessian(&x, IndexSet::All).unwrap()).unwrap();
        let hy = assemble(&o.hessian(&y, IndexSet::All).unwrap()).unwrap();
        let dist = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        prop_assert!(sym_spectral_norm(&(hx - hy)) <= l_h * dist * (1.0 + 1e-10));
    }
}
