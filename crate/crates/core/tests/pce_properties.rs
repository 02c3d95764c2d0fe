use nalgebra::DVector;
use polysens::orthobasis::{tensor_rule, IndexSet, MarginalFamily};
use polysens::pce::fit_least_squares;
use polysens::sampling::sample_product;
use polysens::{SampleSet, Subset, Surrogate};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = MarginalFamily> {
    prop_oneof![
        (-3.0..3.0f64, 0.5..4.0f64).prop_map(|(a, w)| MarginalFamily::uniform(a, a + w).unwrap()),
        (-3.0..3.0f64, 0.2..2.0f64).prop_map(|(m, s)| MarginalFamily::gaussian(m, s).unwrap()),
    ]
}

/// Random non-constant surrogate with `d <= 3` inputs and degree `<= 3`.
fn surrogate() -> impl Strategy<Value = Surrogate> {
    (1usize..=3, 1u32..=3)
        .prop_flat_map(|(d, p)| {
            let r = IndexSet::total_order(d, p).unwrap().len();
            (prop::collection::vec(family(), d), Just(p), prop::collection::vec(-1.0..1.0f64, r))
        })
        .prop_filter("needs variance", |(_, _, c)| c[1..].iter().any(|v| v.abs() > 1e-3))
        .prop_map(|(fams, p, c)| {
            let set = IndexSet::total_order(fams.len(), p).unwrap();
            Surrogate::new(fams, set, DVector::from_vec(c)).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sobol_indices_sum_to_one(s in surrogate()) {
        let all = s.all_sobol_indices().unwrap();
        let sum: f64 = all.iter().map(|(_, v)| v).sum();
        prop_assert!((sum - 1.0).abs() < 1e-10, "sum = {}", sum);
        prop_assert!(all.iter().all(|(_, v)| *v >= -1e-10));
        let d = s.input_dim();
        let by_enumeration: f64 = Subset::all_nonempty(d).into_iter().map(|u| s.sobol_index(u).unwrap()).sum();
        prop_assert!((by_enumeration - 1.0).abs() < 1e-10);
    }

    #[test]
    fn totals_dominate_containing_subsets(s in surrogate()) {
        let d = s.input_dim();
        for i in 0..d {
            let t = s.total_sobol(i).unwrap();
            for u in Subset::all_nonempty(d).into_iter().filter(|u| u.contains(i)) {
                prop_assert!(t + 1e-12 >= s.sobol_index(u).unwrap());
            }
        }
    }

    #[test]
    fn refitting_own_evaluations_is_idempotent(s in surrogate(), seed in any::<u64>()) {
        let fams = s.families().to_vec();
        let n = 3 * s.index_set().len() + 5;
        let x = sample_product(&fams, n, seed);
        let f = s.evaluate(&x).unwrap();
        let refit = fit_least_squares(&fams, s.index_set(), &SampleSet::new(x, f).unwrap()).unwrap();
        let scale = s.coefficients().amax().max(1.0);
        for (a, b) in refit.coefficients().iter().zip(s.coefficients().iter()) {
            prop_assert!((a - b).abs() < 1e-10 * scale, "{} vs {}", a, b);
        }
    }

    #[test]
    fn variance_matches_quadrature(s in surrogate()) {
        let p = s.index_set().max_total_degree() as usize;
        // 2p-degree integrand needs p + 1 points per dimension
        let rule = tensor_rule(s.families(), p).unwrap();
        let y = s.evaluate(rule.points()).unwrap();
        let w = rule.weights();
        let mean: f64 = y.iter().zip(w).map(|(a, b)| a * b).sum();
        let var: f64 = y.iter().zip(w).map(|(a, b)| b * (a - mean).powi(2)).sum();
        prop_assert!((mean - s.mean()).abs() < 1e-10 * (1.0 + mean.abs()));
        prop_assert!((var - s.variance()).abs() < 1e-10 * (1.0 + var));
    }

    #[test]
    fn json_round_trip(s in surrogate()) {
        let text = serde_json::to_string(&s).unwrap();
        let back: Surrogate = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, s);
    }
}
