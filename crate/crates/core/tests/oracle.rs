use sumstat::fading::{self, table2, AlphaMuMixtureModel, GaussianConstructionSpec, MftrParams};
use sumstat::oracle::*;

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn rayleigh_sampler_mean_and_power() {
    let s = sample_alpha_mu(2.0, 1.0, 1.0, 7, 1_000_000).unwrap();
    let (m, se) = mean_and_se(&s);
    assert!((m - std::f64::consts::PI.sqrt() / 2.0).abs() < 3.0 * se, "{m} ± {se}");
    let p: Vec<f64> = s.iter().map(|r| r * r).collect();
    let (m2, se2) = mean_and_se(&p);
    assert!((m2 - 1.0).abs() < 4.0 * se2);
}

#[test]
fn alpha_mu_sampler_passes_ks() {
    let n = 200_000;
    let s = sample_alpha_mu(2.5, 1.7, 1.3, 11, n).unwrap();
    let d = Ecdf::new(&s).ks_distance(|r| alpha_mu_cdf(2.5, 1.7, 1.3, r));
    assert!(d < KS_C99 / (n as f64).sqrt(), "{d}");
}

#[test]
fn zero_los_construction_is_rayleigh() {
    let spec = GaussianConstructionSpec {
        t: vec![2],
        sigma2: vec![0.5],
        los: vec![],
        alpha: 2.0,
        r_hat: 1.0,
    };
    let n = 200_000;
    let s = sample_gaussian_construction(&spec, 3, n).unwrap();
    let d = Ecdf::new(&s).ks_distance(|r| 1.0 - (-r * r).exp());
    assert!(d < KS_C99 / (n as f64).sqrt(), "{d}");
}

#[test]
fn construction_power_mean_is_r_hat_alpha() {
    let spec = GaussianConstructionSpec {
        t: vec![2, 3],
        sigma2: vec![1.0, 1.0],
        los: vec![vec![1.5]],
        alpha: 2.0,
        r_hat: 1.4,
    };
    let s = sample_gaussian_construction(&spec, 5, 400_000).unwrap();
    let p: Vec<f64> = s.iter().map(|r| r * r).collect();
    let (m, se) = mean_and_se(&p);
    assert!((m - 1.96).abs() < 4.0 * se, "{m} ± {se}");
}

#[test]
fn mftr_sampler_power_mean_is_gamma_bar() {
    let p = table2::mftr(1);
    let s = sample_mftr_conditional(&p, 9, 1_000_000).unwrap();
    let e2: Vec<f64> = s.iter().map(|r| r * r).collect();
    let (m, se) = mean_and_se(&e2);
    assert!((m - p.gamma_bar).abs() < 4.0 * se, "{m} ± {se}");
}

#[test]
fn mftr_sampler_matches_table1_weights() {
    let n = 200_000;
    let p = table2::mftr(1);
    let s = sample_mftr_conditional(&p, 13, n).unwrap();
    let mix = MixtureDensity::new(&AlphaMuMixtureModel::mftr(p).unwrap(), 1e-12).unwrap();
    let e = Ecdf::new(&s);
    let grid = central_mass_grid(&s, 40).unwrap();
    let r = compare_with(&e, |x| AnalyticPoint::exact(mix.cdf(x)), &grid).unwrap();
    assert!(r.sup_deviation < 0.005, "{}", r.sup_deviation);
}

#[test]
fn mftr_without_fluctuation_tends_to_kappa_mu() {
    let n = 200_000;
    let p = MftrParams {
        k: 2.0,
        delta: 0.0,
        mu: 2,
        m: 1e6,
        gamma_bar: 1.0,
    };
    let s = sample_mftr_conditional(&p, 17, n).unwrap();
    let km = MixtureDensity::new(&AlphaMuMixtureModel::kappa_mu(2.0, 2.0, 1.0).unwrap(), 1e-12).unwrap();
    let grid = central_mass_grid(&s, 40).unwrap();
    let r = empirical_cdf_compare(&s, |x| AnalyticPoint::exact(km.cdf(x)), &grid).unwrap();
    assert!(r.sup_deviation < 0.005, "{}", r.sup_deviation);
}

#[test]
fn ratio_sampler_mean_and_distribution() {
    let model = table2::ratio(2).unwrap();
    let n = 400_000;
    let s = sample_ratio(&model, 21, n).unwrap();
    let (m, se) = mean_and_se(&s);
    let expect = fading::ratio_mean(&model).unwrap();
    assert!((m - expect).abs() < 4.0 * se, "{m} ± {se} vs {expect}");
    let grid = central_mass_grid(&s, 40).unwrap();
    let r = empirical_cdf_compare(&s, |z| AnalyticPoint::exact(ratio_cdf_quadrature(&model, z)), &grid).unwrap();
    assert!(r.pass, "{}", r.sup_deviation);
}

#[test]
fn ratio_median_from_marginal_medians() {
    // same μ on both sides: median(M/Q) = median(M)/median(Q) only
    // approximately, so compare against the quadrature CDF at that point
    let model = fading::RatioAlphaMuModel::new(2.0, 2.5, 2.0, 2.0, 1.0, 1.0).unwrap();
    let s = sample_ratio(&model, 23, 200_000).unwrap();
    let med = Ecdf::new(&s).quantile(0.5);
    assert!((ratio_cdf_quadrature(&model, med) - 0.5).abs() < 0.005);
}

#[test]
fn ratio_quadrature_pdf_integrates_to_cdf() {
    let model = table2::ratio(1).unwrap();
    let h = 1e-3;
    let v: Vec<f64> = (0..=3000).map(|k| ratio_pdf_quadrature(&model, h * k as f64)).collect();
    let integral = trapezoid(&v, h);
    assert!((integral - ratio_cdf_quadrature(&model, 3.0)).abs() < 1e-6);
}

#[test]
fn sampling_is_seed_deterministic() {
    let spec = SamplerSpec::new(SamplerModel::MftrConditional(table2::mftr(2)), 99, 5000);
    assert_eq!(draw(&spec).unwrap(), draw(&spec).unwrap());
    let sharded = spec.clone().with_streams(4);
    let a = draw(&sharded).unwrap();
    assert_eq!(a, draw(&sharded).unwrap());
    assert_eq!(a.len(), 5000);
    // stream 0 of the sharded draw is a prefix of the single-stream draw
    assert_eq!(a[..1250], draw(&spec).unwrap()[..1250]);
}

#[test]
fn mixture_index_sampler_matches_mixture_cdf() {
    let model = AlphaMuMixtureModel::kappa_mu(1.5, 1.2, 1.0).unwrap();
    let s = draw(&SamplerSpec::new(SamplerModel::MixtureIndex(model.clone()), 4, 100_000)).unwrap();
    let mix = MixtureDensity::new(&model, 1e-12).unwrap();
    let grid = central_mass_grid(&s, 40).unwrap();
    let r = empirical_cdf_compare(&s, |x| AnalyticPoint::exact(mix.cdf(x)), &grid).unwrap();
    assert!(r.pass, "{}", r.sup_deviation);
}

#[test]
fn compare_self_test_and_negative_control() {
    let n = 100_000;
    let s = sample_alpha_mu(2.0, 1.0, 1.0, 1, n).unwrap();
    let grid = central_mass_grid(&s, 40).unwrap();
    let exact = |x: f64| AnalyticPoint::exact(alpha_mu_cdf(2.0, 1.0, 1.0, x));
    assert!(empirical_cdf_compare(&s, exact, &grid).unwrap().pass);
    let shifted: Vec<f64> = s.iter().map(|x| x + 0.1).collect();
    assert!(!empirical_cdf_compare(&shifted, exact, &grid).unwrap().pass);
    assert!(matches!(
        empirical_cdf_compare(&s[..100], exact, &grid),
        Err(OracleError::TooFewSamples(100))
    ));
}

#[test]
fn uncertified_points_are_excluded() {
    let s = sample_alpha_mu(2.0, 1.0, 1.0, 2, 20_000).unwrap();
    let grid = linspace(0.2, 2.0, 10);
    let r = empirical_cdf_compare(
        &s,
        |x| AnalyticPoint {
            cdf: if x > 1.5 { 0.0 } else { 1.0 - (-x * x).exp() },
            bound: 1e-9,
            certified: x <= 1.5,
        },
        &grid,
    )
    .unwrap();
    assert!(r.pass);
    assert_eq!(r.certified_count() + r.excluded.len(), 10);
    assert!(!r.excluded.is_empty());
}

fn rayleigh_grid(h: f64, len: usize) -> GridDensity {
    GridDensity::sample(h, len, |x| 2.0 * x * (-x * x).exp())
}

#[test]
fn narrow_spike_is_the_identity() {
    let h = 1e-3;
    let len = 6000;
    let ray = rayleigh_grid(h, len);
    // unit-mass spike on the first grid cell (trapezoid weight h/2)
    let mut spike = vec![0.0; len];
    spike[0] = 2.0 / h;
    let spike = GridDensity {
        step: h,
        values: spike,
        tail_mass: 0.0,
    };
    let out = brennan_convolve(&[ray.clone(), spike]).unwrap();
    let err = out.pdf.iter().zip(&ray.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9, "{err}");
}

#[test]
fn two_rayleigh_matches_single_integral() {
    let h = 2e-3;
    let len = 3001;
    let ray = rayleigh_grid(h, len);
    let out = brennan_convolve(&[ray.clone(), ray]).unwrap();
    // F_X(x) = ∫_0^x f(u) F(x-u) du by composite Simpson
    let reference = |x: f64| {
        let n = 2000;
        let dh = x / n as f64;
        let g = |u: f64| 2.0 * u * (-u * u).exp() * (1.0 - (-(x - u) * (x - u)).exp());
        let mut acc = g(0.0) + g(x);
        for k in 1..n {
            acc += g(dh * k as f64) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * dh / 3.0
    };
    for x in [0.5, 1.0, 1.5, 2.0, 3.0, 4.0] {
        let got = out.cdf_at(x).unwrap();
        assert!((got - reference(x)).abs() < 1e-4, "x={x}: {got} vs {}", reference(x));
    }
}

#[test]
fn convolution_is_symmetric() {
    let h = 1e-2;
    let len = 1000;
    let a = rayleigh_grid(h, len);
    let b = GridDensity::sample(h, len, |x| alpha_mu_pdf(2.5, 1.5, 1.2, x));
    let c = GridDensity::sample(h, len, |x| alpha_mu_pdf(1.5, 2.0, 0.8, x));
    let p = brennan_convolve(&[a.clone(), b.clone(), c.clone()]).unwrap();
    let q = brennan_convolve(&[c, a, b]).unwrap();
    let norm = p.pdf.iter().zip(&q.pdf).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(norm < 1e-12, "{norm}");
}

#[test]
fn convolution_rejects_bad_inputs() {
    let a = rayleigh_grid(1e-2, 1000);
    assert!(matches!(
        brennan_convolve(&vec![a.clone(); 7]),
        Err(OracleError::TooManyOperands(7))
    ));
    let short = rayleigh_grid(1e-2, 999);
    assert!(matches!(brennan_convolve(&[a.clone(), short]), Err(OracleError::GridMismatch(_))));
    let truncated = rayleigh_grid(1e-2, 100);
    assert!(matches!(brennan_convolve(&[truncated]), Err(OracleError::Mass { index: 0, .. })));
}
