use nalgebra::{DMatrix, DVector};
use polysens::extremum::{mcf_filter, tail_count, BandwidthRule, BaseBasis, CorrelatedBasis, ExtremumFit, FilteredMeasure, KernelDensity, Tail};
use polysens::orthobasis::IndexSet;
use polysens::sampling::sample_product;
use polysens::MarginalFamily;
use proptest::prelude::*;

fn unit_kde(seed: u64) -> KernelDensity {
    let x = sample_product(&[MarginalFamily::uniform(0.0, 1.0).unwrap()], 2000, seed);
    KernelDensity::fit(x.as_slice(), (0.0, 1.0), BandwidthRule::Silverman).unwrap()
}

fn gaussian_kde(seed: u64) -> KernelDensity {
    let x = sample_product(&[MarginalFamily::gaussian(1.0, 2.0).unwrap()], 2000, seed);
    KernelDensity::fit(x.as_slice(), MarginalFamily::gaussian(1.0, 2.0).unwrap().support(), BandwidthRule::Silverman).unwrap()
}

fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in order.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (a.iter().sum::<f64>() / a.len() as f64, b.iter().sum::<f64>() / b.len() as f64);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filtered_tails_are_ordered(n in 200usize..2000, fraction in 0.05..0.45f64, seed in any::<u64>()) {
        let fams = [MarginalFamily::uniform(0.0, 1.0).unwrap(), MarginalFamily::gaussian(0.0, 1.0).unwrap()];
        let x = sample_product(&fams, n, seed);
        // the output is the second column, so retained rows carry their outputs
        let y: Vec<f64> = x.column(1).iter().map(|v| v.powi(3) + 0.1 * v).collect();
        prop_assume!(fraction * n as f64 >= 20.0);
        let low = mcf_filter(&x, &y, fraction, Tail::Bottom).unwrap();
        let high = mcf_filter(&x, &y, fraction, Tail::Top).unwrap();
        let k = tail_count(n, fraction);
        prop_assert!(low.nrows() >= k && high.nrows() >= k);
        let mut sorted = y.clone();
        sorted.sort_by(f64::total_cmp);
        let out = |r: &DMatrix<f64>| r.column(1).iter().map(|v| v.powi(3) + 0.1 * v).collect::<Vec<f64>>();
        let (ylow, yhigh) = (out(&low), out(&high));
        prop_assert!(ylow.iter().all(|&v| v <= sorted[k - 1]));
        prop_assert!(yhigh.iter().all(|&v| v >= sorted[n - k]));
        prop_assert!(ylow.iter().fold(f64::MIN, |a, &b| a.max(b)) < yhigh.iter().fold(f64::MAX, |a, &b| a.min(b)));
    }

    #[test]
    fn correlated_basis_is_orthonormal_on_its_sample(
        rho in -0.9..0.9f64,
        p in 1u32..=3,
        legendre in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let measure = FilteredMeasure::from_parts(vec![unit_kde(seed), gaussian_kde(seed ^ 1)], corr).unwrap();
        let inputs = [MarginalFamily::uniform(0.0, 1.0).unwrap(), MarginalFamily::gaussian(1.0, 2.0).unwrap()];
        let set = IndexSet::total_order(2, p).unwrap();
        let base = if legendre { BaseBasis::MarginalLegendre } else { BaseBasis::InputFamily };
        let basis = CorrelatedBasis::orthogonalize(&measure, &inputs, &set, 20 * set.len(), seed ^ 2, base).unwrap();
        prop_assert!(basis.orthonormality_error() < 1e-10, "error {}", basis.orthonormality_error());
    }

    #[test]
    fn correlated_fit_reproduces_polynomials(rho in -0.9..0.9f64, p in 1u32..=3, seed in any::<u64>()) {
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let measure = FilteredMeasure::from_parts(vec![unit_kde(seed), gaussian_kde(seed ^ 1)], corr).unwrap();
        let inputs = [MarginalFamily::uniform(0.0, 1.0).unwrap(), MarginalFamily::gaussian(1.0, 2.0).unwrap()];
        let set = IndexSet::total_order(2, p).unwrap();
        let basis = CorrelatedBasis::orthogonalize(&measure, &inputs, &set, 20 * set.len(), seed ^ 2, BaseBasis::InputFamily).unwrap();
        let draw = measure.copula_sample(400, seed ^ 3);
        let poly = |x: &DMatrix<f64>| {
            let k = p as i32;
            DVector::from_iterator(x.nrows(), x.row_iter().map(|r| 1.0 - 0.5 * r[1] + r[0].powi(k - 1) * r[1] + r[0].powi(k)))
        };
        let f = poly(&draw.x);
        let fit = ExtremumFit::fit(basis, &draw.x, &f).unwrap();
        let test = measure.copula_sample(500, seed ^ 4);
        let want = poly(&test.x);
        let got = fit.predict(&test.x).unwrap();
        let rel = (got - &want).norm() / want.norm();
        prop_assert!(rel < 1e-6, "relative RMS {}", rel);
    }
}

#[test]
fn copula_marginals_match_their_densities() {
    let measure = FilteredMeasure::from_parts(vec![unit_kde(1), gaussian_kde(2), unit_kde(3)], DMatrix::identity(3, 3)).unwrap();
    let draw = measure.copula_sample(10_000, 7);
    for (k, kde) in measure.marginals().iter().enumerate() {
        let col: Vec<f64> = draw.x.column(k).iter().copied().collect();
        let ks = ks_distance(&col, |x| kde.cdf(x));
        assert!(ks < 0.02, "dimension {k}: KS distance {ks}");
    }
    assert_eq!(measure.copula_sample(0, 7).x.nrows(), 0);
}

#[test]
fn perfect_correlation_gives_comonotone_samples() {
    let corr = DMatrix::from_element(2, 2, 1.0);
    let measure = FilteredMeasure::from_parts(vec![unit_kde(4), gaussian_kde(5)], corr).unwrap();
    let draw = measure.copula_sample(5000, 11);
    let a: Vec<f64> = draw.x.column(0).iter().copied().collect();
    let b: Vec<f64> = draw.x.column(1).iter().copied().collect();
    let spearman = pearson(&ranks(&a), &ranks(&b));
    assert!(spearman > 0.99, "rank correlation {spearman}");
}

#[test]
fn independent_measure_factor_is_near_identity() {
    let measure = FilteredMeasure::from_parts(vec![unit_kde(6), gaussian_kde(7)], DMatrix::identity(2, 2)).unwrap();
    let inputs = [MarginalFamily::uniform(0.0, 1.0).unwrap(), MarginalFamily::gaussian(1.0, 2.0).unwrap()];
    let set = IndexSet::total_order(2, 2).unwrap();
    let n = 20_000;
    let basis = CorrelatedBasis::orthogonalize(&measure, &inputs, &set, n, 8, BaseBasis::MarginalLegendre).unwrap();
    // QR signs are free, so compare magnitudes
    let dev = (basis.r().abs() - DMatrix::identity(set.len(), set.len())).amax();
    assert!(dev < 5.0 / (n as f64).sqrt(), "max deviation {dev}");
}

#[test]
fn filter_rejects_bad_fractions() {
    let x = sample_product(&[MarginalFamily::legendre()], 1000, 3);
    let y: Vec<f64> = x.iter().copied().collect();
    assert!(mcf_filter(&x, &y, 0.6, Tail::Top).is_err());
    assert!(mcf_filter(&x, &y, 0.005, Tail::Top).is_err());
}
