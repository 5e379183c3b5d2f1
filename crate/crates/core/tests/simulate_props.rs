use poismix::simulate::{generate_dataset, model_pair, signal_strength, DesignSpec, MODEL_IDS};

#[test]
fn unit_shift_models_have_strong_signal() {
    // shapes one apart at rate 1: every realisation shifts the mean by one
    for id in ["3a", "3c", "4a", "4c"] {
        let (m0, m1) = model_pair(id).unwrap();
        let s = signal_strength(&m0, &m1, 2000, 21).unwrap();
        assert!(s.d >= 0.9 && s.d_h >= 0.9, "{id}: D {} D_h {}", s.d, s.d_h);
    }
}

#[test]
fn every_model_generates_valid_data() {
    let design = DesignSpec::design_a(20);
    for id in MODEL_IDS {
        let (m0, m1) = model_pair(id).unwrap();
        let data = generate_dataset(&design, &m0, &m1, 1).unwrap();
        assert_eq!(data.samples.len(), design.n_subjects());
        for (s, mix) in data.samples.iter().zip(&data.mixings) {
            assert_eq!(s.len(), 20);
            assert_eq!(s.bound(), m0.bound);
            assert!((mix.shape - m0.shape_base).abs() <= 1.0 || (mix.shape - m1.shape_base).abs() <= 1.0);
        }
    }
}

#[test]
fn design_b_shares_read_depths_and_design_c_varies_sizes() {
    let (m0, m1) = model_pair("1a").unwrap();
    let b = generate_dataset(&DesignSpec::design_b(30), &m0, &m1, 2).unwrap();
    let first = b.samples[0].read_depths().to_vec();
    assert!(first.iter().any(|&r| r != 1.0));
    assert!(b.samples.iter().all(|s| s.read_depths() == first.as_slice()));

    let c = generate_dataset(&DesignSpec::design_c(), &m0, &m1, 2).unwrap();
    let sizes: Vec<usize> = c.samples.iter().map(|s| s.len()).collect();
    assert_eq!(sizes.len(), 23);
    assert!(sizes.iter().min() < sizes.iter().max());
}

#[test]
fn clamped_gamma_sampler_moments() {
    use poismix::simulate::SubjectMixing;
    let mut rng = poismix::rng::stream(8, 0);
    let draws = 100_000;

    let tight = SubjectMixing { shape: 6.0, rate: 1.0, bound: 20.0 }.sampler().unwrap();
    let clamped = (0..draws).filter(|_| tight(&mut rng) >= 20.0).count();
    assert!((clamped as f64) / (draws as f64) < 1e-4, "{clamped} clamped draws");

    // Model 1(a) with a fixed jitter: mean (14 + delta) / 1.75, variance shape / rate^2
    let delta = 0.4;
    let m = SubjectMixing { shape: 14.0 + delta, rate: 1.75, bound: 50.0 };
    let f = m.sampler().unwrap();
    let mean = (0..draws).map(|_| f(&mut rng)).sum::<f64>() / draws as f64;
    let sd = (m.shape / (m.rate * m.rate) / draws as f64).sqrt();
    assert!((mean - m.mean_unclamped()).abs() <= 3.0 * sd, "{mean} vs {}", m.mean_unclamped());
}

#[test]
fn ratios_average_to_the_mixing_mean() {
    let (m0, m1) = model_pair("2a").unwrap();
    let data = generate_dataset(&DesignSpec::design_b(4000), &m0, &m1, 9).unwrap();
    for (s, mix) in data.samples.iter().zip(&data.mixings).take(4) {
        let ratios: Vec<f64> = s.counts().iter().zip(s.read_depths()).map(|(&x, &r)| x as f64 / r).collect();
        let n = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / n;
        let var = ratios.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - mix.mean_unclamped()).abs() <= 3.0 * (var / n).sqrt(), "{mean} vs {}", mix.mean_unclamped());
    }
}
