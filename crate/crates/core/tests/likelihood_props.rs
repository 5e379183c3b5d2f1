mod common;

use poismix::measures::DiscreteMeasure;
use poismix::{phi, phi_prime, CountSample};
use proptest::prelude::*;

const B: f64 = 30.0;

fn measure() -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((0.01..B, 0.01f64..1.0), 1..=5).prop_map(|atoms| {
        let (s, w): (Vec<f64>, Vec<f64>) = atoms.into_iter().unzip();
        DiscreteMeasure::new(s, w, B).unwrap()
    })
}

fn sample() -> impl Strategy<Value = CountSample> {
    prop::collection::vec((0u64..40, 0.5f64..1.5), 1..40).prop_map(|cells| {
        let (x, r): (Vec<u64>, Vec<f64>) = cells.into_iter().unzip();
        CountSample::new(x, r, B).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_direct_summation(g in measure(), s in sample()) {
        let want = common::phi_direct(g.support(), g.weights(), &s);
        prop_assert!((phi(&g, &s).unwrap() - want).abs() <= 1e-10 * (1.0 + want.abs()));
    }

    #[test]
    fn concave_along_mixtures(g1 in measure(), g2 in measure(), s in sample(), t in 0.01f64..0.99) {
        let mixed = g1.mix(&g2, t).unwrap();
        let lhs = phi(&mixed, &s).unwrap();
        let rhs = t * phi(&g1, &s).unwrap() + (1.0 - t) * phi(&g2, &s).unwrap();
        prop_assert!(lhs >= rhs - 1e-10, "{lhs} < {rhs}");
    }

    #[test]
    fn atom_splitting_leaves_phi_unchanged(g in measure(), s in sample(), k in 0usize..5) {
        let k = k % g.len();
        let mut support = g.support().to_vec();
        let mut weights = g.weights().to_vec();
        weights[k] /= 2.0;
        support.push(support[k]);
        weights.push(weights[k]);
        let split = DiscreteMeasure::new(support, weights, B).unwrap();
        prop_assert!((phi(&split, &s).unwrap() - phi(&g, &s).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn derivative_matches_finite_differences(g in measure(), s in sample(), lambda in 0.0..B) {
        let eps = 1e-6;
        let exact = phi_prime(&g, lambda, &s).unwrap();
        // the O(eps) term scales with mean (k/mix - 1)^2, huge for extreme ratios
        prop_assume!(exact.abs() < 100.0);
        let point = poismix::point_mass(lambda, B).unwrap();
        let base = phi(&g, &s).unwrap();
        let forward = |e: f64| (phi(&point.mix(&g, e).unwrap(), &s).unwrap() - base) / e;
        // Richardson extrapolation cancels the first-order error
        let fd = 2.0 * forward(eps / 2.0) - forward(eps);
        prop_assert!((fd - exact).abs() <= 1e-4 * (1.0 + exact.abs()), "fd {fd} exact {exact}");
    }
}
