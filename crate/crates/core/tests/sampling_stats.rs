mod common;

use ncg_core::linalg::{assemble, sym_spectral_norm};
use ncg_core::sampling::{
    adapt_grad_batch, grad_sample_size, hess_sample_size, sample_indices, verify_condition, Condition,
    ConditionContext,
};
use ncg_core::{IndexSet, Link, NlsProblem, ObjectiveOracle};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn subsampled_gradient_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = NlsProblem::synthetic(200, 5, Link::Sigmoid, &mut rng);
    let o = ObjectiveOracle::new(p);
    let x = common::gaussian_vec(5, &mut rng);
    let full = o.eval_grad(&x, &IndexSet::All).unwrap();
    let reps = 4000;
    let mut acc = [0.0; 5];
    for _ in 0..reps {
        let s = IndexSet::Subset(sample_indices(200, 10, &mut rng).unwrap());
        let g = o.eval_grad(&x, &s).unwrap();
        for (a, v) in acc.iter_mut().zip(g) {
            *a += v / reps as f64;
        }
    }
    let err = common::norm(&acc.iter().zip(&full).map(|(a, b)| a - b).collect::<Vec<_>>());
    // sampling error of a mean over 4000 draws of batch 10
    assert!(err < 0.05 * common::norm(&full).max(1e-3) + 2e-3, "err {err}");
}

#[test]
fn inclusion_frequency_is_uniform() {
    let (n, b, reps) = (50, 10, 20_000);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = vec![0usize; n];
    for _ in 0..reps {
        for i in sample_indices(n, b, &mut rng).unwrap() {
            counts[i] += 1;
        }
    }
    let expect = reps as f64 * b as f64 / n as f64;
    let sd = (expect * (1.0 - b as f64 / n as f64)).sqrt();
    for c in counts {
        assert!((c as f64 - expect).abs() < 5.0 * sd, "{c} vs {expect}");
    }
}

#[test]
fn hessian_error_shrinks_with_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 2000;
    let p = NlsProblem::synthetic(n, 6, Link::Tanh, &mut rng);
    let o = ObjectiveOracle::new(p);
    let x = common::gaussian_vec(6, &mut rng);
    let full = assemble(&o.hessian(&x, IndexSet::All).unwrap()).unwrap();
    let mean_err = |b: usize, rng: &mut ChaCha8Rng| {
        let reps = 40;
        (0..reps)
            .map(|_| {
                let s = IndexSet::Subset(sample_indices(n, b, rng).unwrap());
                let h = assemble(&o.hessian(&x, s).unwrap()).unwrap();
                sym_spectral_norm(&(h - &full))
            })
            .sum::<f64>()
            / reps as f64
    };
    let e_small = mean_err(20, &mut rng);
    let e_large = mean_err(320, &mut rng);
    // error ~ 1/sqrt(batch): ratio near 4
    let ratio = e_small / e_large;
    assert!(ratio > 2.5 && ratio < 6.0, "ratio {ratio}");
}

#[test]
fn sample_sizes_scale_inverse_square() {
    let a = grad_sample_size(1.0, 0.1, 0.01) as f64;
    let b = grad_sample_size(1.0, 0.05, 0.01) as f64;
    assert!((b / a - 4.0).abs() < 1e-2);
    let c = hess_sample_size(2.0, 0.1, 10, 0.01) as f64;
    let e = hess_sample_size(2.0, 0.2, 10, 0.01) as f64;
    assert!((c / e - 4.0).abs() < 1e-2);
}

proptest! {
    #[test]
    fn indices_distinct_sorted_in_range(seed in any::<u64>(), n in 1usize..500, b in 1usize..600) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_indices(n, b, &mut rng).unwrap();
        prop_assert_eq!(s.len(), b.min(n));
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(s.iter().all(|i| *i < n));
    }

    #[test]
    fn adaptive_batch_stays_in_range(prev in 1usize..10_000, now in 0.0f64..10.0, before in 1e-3f64..10.0, n in 1usize..10_000, floor in 1usize..100) {
        let next = adapt_grad_batch(prev.min(n), now, before, n, floor);
        prop_assert!(next >= floor.min(n) && next <= n);
        let p = prev.min(n);
        if now >= 1.2 * before {
            prop_assert!(next <= p.max(floor.min(n)));
        } else if now <= before / 1.2 {
            prop_assert!(next >= p);
        }
    }

    #[test]
    fn condition_monotone_in_errors(eg in 0.0f64..1e-2, eh in 0.0f64..0.1, s in 1.0f64..2.0) {
        let ctx = ConditionContext {
            eps_g: 1e-3, eps_h: 0.1, zeta: 0.5, eta: 0.1, l_h: Some(1.0),
            norm_d: 0.5, norm_g: 0.2, norm_g_next: 0.1,
        };
        for which in [Condition::LineSearch, Condition::FixedStep] {
            let big = verify_condition(eg * s, eh * s, &ctx, which).unwrap();
            let small = verify_condition(eg, eh, &ctx, which).unwrap();
            prop_assert!(!big || small);
        }
    }
}
