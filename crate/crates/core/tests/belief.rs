mod common;

use infotamp::belief::{kf_update, posterior_cov, GaussianBelief, Measurement, SensorModel};
use infotamp::geometry::{vec2, Polygon};
use infotamp::map::Disk;
use infotamp::world::{Pose, RobotParams, World};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spd(n: usize, seed: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()]);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.05
}

#[test]
fn repeated_full_observations_match_closed_form() {
    let sigma0 = spd(4, &[0.3, -0.1, 0.2, 0.05, 0.4, 0.1, -0.2, 0.3, 0.15]);
    let r = [0.01, 0.02, 0.015, 0.03];
    let noise = DVector::from_row_slice(&r);
    let mut cov = sigma0.clone();
    for k in 1..=25 {
        cov = posterior_cov(&cov, &[0, 1], &noise).unwrap();
        let expect = common::repeated_full_observation(&sigma0, &r, k);
        let err = (&cov - &expect).abs().max();
        assert!(err < 1e-9, "k={k}: error {err:e}");
    }
}

#[test]
fn mean_update_matches_textbook_gain_form() {
    let sigma0 = spd(4, &[0.2, 0.05, -0.1, 0.3, 0.1]);
    let b = GaussianBelief::new(DVector::from_row_slice(&[1.0, 2.0, 3.0, 1.5]), sigma0.clone()).unwrap();
    let meas = Measurement {
        observed: vec![1],
        y: DVector::from_row_slice(&[3.2, 1.1]),
        noise: DVector::from_row_slice(&[0.02, 0.03]),
    };
    let post = kf_update(&b, &meas).unwrap();
    let h = DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let s = &h * &sigma0 * h.transpose() + DMatrix::from_diagonal(&meas.noise);
    let k = &sigma0 * h.transpose() * s.try_inverse().unwrap();
    let mean = b.mean() + &k * (&meas.y - &h * b.mean());
    let cov = (DMatrix::identity(4, 4) - &k * &h) * &sigma0;
    assert!((post.mean() - mean).abs().max() < 1e-12);
    assert!((post.cov() - cov).abs().max() < 1e-12);
}

#[test]
fn thousand_random_updates_never_increase_uncertainty() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cov = spd(6, &[0.4, 0.1, -0.2, 0.3, 0.05, 0.2, -0.1]);
    for _ in 0..1000 {
        let observed: Vec<usize> = (0..3).filter(|_| rng.random_bool(0.5)).collect();
        let noise = DVector::from_fn(2 * observed.len(), |_, _| rng.random_range(1e-4..0.5));
        let post = posterior_cov(&cov, &observed, &noise).unwrap();
        assert!(post.determinant() <= cov.determinant() * (1.0 + 1e-9));
        for i in 0..3 {
            let block = |m: &DMatrix<f64>| m.fixed_view::<2, 2>(2 * i, 2 * i).determinant();
            assert!(block(&post) <= block(&cov) * (1.0 + 1e-9) + 1e-300);
        }
        cov = post;
    }
}

#[test]
fn measurement_noise_has_the_modelled_variance() {
    let sensor = SensorModel { range: 5.0, noise_scale: 0.05, noise_floor: 1e-6 };
    let object = vec2(2.0, 3.0);
    let world = World::new(
        RobotParams::default(),
        sensor,
        Polygon::rectangle(vec2(0.0, 0.0), vec2(5.0, 5.0)),
        Vec::new(),
        Vec::new(),
        vec![Disk { center: object, radius: 0.1 }],
        Pose { position: vec2(1.0, 1.0), heading: 0.0 },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 20_000;
    let (mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let m = world.measure(&mut rng);
        let (dx, dy) = (m.y[0] - object.x, m.y[1] - object.y);
        sx += dx;
        sy += dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let nf = n as f64;
    let (vx, vy) = (sxx / nf - (sx / nf).powi(2), syy / nf - (sy / nf).powi(2));
    let (ex, ey) = ((0.05f64 * 2.0).powi(2), (0.05f64 * 3.0).powi(2));
    assert!((vx / ex - 1.0).abs() < 0.05, "x variance {vx} vs {ex}");
    assert!((vy / ey - 1.0).abs() < 0.05, "y variance {vy} vs {ey}");
    assert!((sx / nf).abs() < 4.0 * (ex / nf).sqrt());
}

proptest! {
    #[test]
    fn posterior_is_symmetric_and_psd(
        seed in prop::collection::vec(-1.0f64..1.0, 16),
        noise in prop::collection::vec(1e-4f64..1.0, 4),
    ) {
        let cov = spd(4, &seed);
        let post = posterior_cov(&cov, &[0, 1], &DVector::from_vec(noise)).unwrap();
        prop_assert!((&post - post.transpose()).abs().max() < 1e-12);
        prop_assert!(post.clone().symmetric_eigenvalues().iter().all(|&l| l > -1e-12));
        prop_assert!(post.determinant() <= cov.determinant() * (1.0 + 1e-9));
    }

    #[test]
    fn empty_measurement_is_identity(seed in prop::collection::vec(-1.0f64..1.0, 9)) {
        let cov = spd(2, &seed);
        let b = GaussianBelief::new(DVector::from_row_slice(&[0.5, 0.5]), cov).unwrap();
        prop_assert_eq!(kf_update(&b, &Measurement::empty()).unwrap(), b);
    }
}
