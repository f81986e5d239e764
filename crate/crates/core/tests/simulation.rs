use odesel::bundled;
use odesel::integrator::{integrate, IntegratorOptions};
use odesel::simulation::{
    kl_linear, power_study, replication_rng, simulate_dataset, size_study, DgpSpec, PowerGrid,
    PowerStudyConfig, Sampling, SizeStudyConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear_dgp(seed: u64) -> DgpSpec {
    DgpSpec {
        model: bundled::load("linear").unwrap(),
        eta: vec![100.0, -0.05, 1.0],
        sigma: vec![7.0],
        n: 300,
        tau: 150.0,
        sampling: Sampling::Uniform,
        seed,
    }
}

#[test]
fn noise_is_centred_on_the_trajectory() {
    for seed in 0..5 {
        let spec = linear_dgp(seed);
        let data = simulate_dataset(&spec).unwrap();
        let traj = integrate(&spec.model, &spec.eta, data.times(), &IntegratorOptions::default()).unwrap();
        let resid: Vec<f64> = (0..data.len()).map(|i| data.value(i, 0) - traj.state(i, 0)).collect();
        let n = resid.len() as f64;
        let mean = resid.iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * 7.0 / n.sqrt(), "mean residual {mean}");
        let sd = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((sd - 7.0).abs() < 1.0, "residual sd {sd}");
        assert!(data.times().iter().all(|t| (0.0..=150.0).contains(t)));
        assert!(data.times().windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn same_seed_same_data() {
    let a = simulate_dataset(&linear_dgp(3)).unwrap();
    let b = simulate_dataset(&linear_dgp(3)).unwrap();
    let c = simulate_dataset(&linear_dgp(4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn replication_streams_are_distinct() {
    let draw = |cell, rep| {
        let mut r = replication_rng(1, cell, rep);
        (0..4).map(|_| r.random::<u64>()).collect::<Vec<_>>()
    };
    assert_eq!(draw(0, 0), draw(0, 0));
    assert_ne!(draw(0, 0), draw(0, 1));
    assert_ne!(draw(0, 0), draw(1, 0));
    assert_ne!(draw(1, 0), draw(0, 1));
}

fn desk_size(seed: u64) -> SizeStudyConfig {
    SizeStudyConfig {
        deltas: vec![0.1],
        reps: 200,
        seed,
        ..SizeStudyConfig::default()
    }
}

#[test]
fn size_study_is_reproducible() {
    let cfg = SizeStudyConfig {
        reps: 20,
        ..desk_size(17)
    };
    assert_eq!(size_study(&cfg).unwrap(), size_study(&cfg).unwrap());
}

#[test]
fn size_is_near_nominal_and_symmetric() {
    let r = size_study(&desk_size(0)).unwrap();
    let cell = &r.cells[0];
    assert_eq!(cell.replications + cell.failures, 200);
    assert_eq!(cell.failures, 0);
    assert!((0.02..=0.09).contains(&cell.rate), "size {}", cell.rate);
    assert_eq!(cell.favor_a + cell.favor_b, cell.rejections);
    let m = (cell.favor_a + cell.favor_b) as f64;
    let gap = (cell.favor_a as f64 - cell.favor_b as f64).abs();
    assert!(gap <= 3.0 * m.sqrt(), "{} vs {}", cell.favor_a, cell.favor_b);
}

#[test]
fn power_study_is_reproducible() {
    let cfg = PowerStudyConfig {
        grid: PowerGrid::Psi5 {
            values: vec![0.25],
            n: 20,
        },
        reps: 3,
        seed: 2,
        ..PowerStudyConfig::default()
    };
    let a = power_study(&cfg).unwrap();
    assert_eq!(a, power_study(&cfg).unwrap());
    assert_eq!(a.cells.len(), 1);
    assert_eq!(a.grid_name, "psi5");
}

#[test]
fn invalid_studies_are_rejected() {
    assert!(size_study(&SizeStudyConfig { reps: 0, ..desk_size(0) }).is_err());
    assert!(size_study(&SizeStudyConfig { alpha: 1.5, ..desk_size(0) }).is_err());
    assert!(size_study(&SizeStudyConfig { deltas: vec![-0.1], ..desk_size(0) }).is_err());
}

fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize) -> f64 {
    let h = (b - a) / (nodes - 1) as f64;
    let inner: f64 = (1..nodes - 1).map(|i| f(a + h * i as f64)).sum();
    h * (inner + 0.5 * (f(a) + f(b)))
}

#[test]
fn kl_matches_dense_trapezoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..5 {
        let delta = rng.random_range(0.01..1.0);
        let sigma = rng.random_range(1.0..10.0);
        let psi1 = -rng.random_range(0.01..0.2);
        let t = rng.random_range(10.0..200.0);
        let f = |s: f64| (1.0 - (psi1 * s).exp()).powi(2);
        let oracle = delta * delta / (2.0 * sigma * sigma * psi1 * psi1) * trapezoid(f, 0.0, t, 1_000_001) / t;
        let kl = kl_linear(delta, sigma, psi1, t).unwrap();
        assert!((kl - oracle).abs() <= 1e-8 * oracle, "{kl} vs {oracle}");
    }
}

#[test]
fn kl_of_the_size_design() {
    // closed form of the integral: T - 2(e^{pT} - 1)/p + (e^{2pT} - 1)/(2p)
    let (p, t) = (-0.05f64, 150.0f64);
    let integral = t - 2.0 * ((p * t).exp() - 1.0) / p + ((2.0 * p * t).exp() - 1.0) / (2.0 * p);
    let expected = 0.01 / (2.0 * 49.0 * p * p) * integral / t;
    let kl = kl_linear(0.1, 7.0, p, t).unwrap();
    assert!((kl - expected).abs() <= 1e-12 * expected);
}
