//! Monte Carlo checks of the sampling and estimation layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use mfgsteer::estimation::{
    beta_schedule, confidence_radii, log_covering_number, LeastSquaresState, Link, TransitionCounts, WidthRule,
};
use mfgsteer::model::{compute_density, sample_trajectory, Density, Dims, MfgModel, Policy};

#[test]
fn trajectory_frequencies_match_the_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dims = Dims::new(3, 2, 3).unwrap();
    let model = MfgModel::random(dims, &mut rng);
    let pi = Policy::random(dims, &mut rng);
    let mu = compute_density(&model, &pi).unwrap();
    let population = Density::uniform(dims);
    let episodes = 40_000;
    let mut freq = vec![0.0; dims.len()];
    for _ in 0..episodes {
        let traj = sample_trajectory(&model, &pi, &population, 0.0, &mut rng).unwrap();
        for (h, st) in traj.steps.iter().enumerate() {
            freq[dims.index(h, st.state, st.action)] += 1.0 / episodes as f64;
        }
    }
    for (f, m) in freq.iter().zip(mu.values()) {
        let se = (m * (1.0 - m) / episodes as f64).sqrt();
        assert!((f - m).abs() <= 5.0 * se + 1e-12, "frequency {f} vs density {m}");
    }
}

#[test]
fn transition_confidence_set_covers_the_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let dims = Dims::new(3, 2, 4).unwrap();
    let delta = 0.1;
    let replicates = 200;
    let mut covered = 0;
    for _ in 0..replicates {
        let model = MfgModel::random(dims, &mut rng);
        let pi = Policy::uniform(dims);
        let population = Density::uniform(dims);
        let mut counts = TransitionCounts::new(dims);
        let rounds = 300;
        for _ in 0..rounds {
            counts.ingest(&sample_trajectory(&model, &pi, &population, 0.0, &mut rng).unwrap()).unwrap();
        }
        counts.close_episode(rounds);
        let set = confidence_radii(&counts, rounds, delta).unwrap();
        if set.contains(&model.transitions, 1e-12) {
            covered += 1;
        }
    }
    assert!(covered as f64 >= (1.0 - delta) * replicates as f64, "{covered}/{replicates}");
}

#[test]
fn ridge_confidence_ellipsoid_covers_the_parameter() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let (d, sigma, delta, alpha, c_theta, r_max) = (4, 0.3, 0.1, 1e-3, 1.0, 1.0);
    let noise = Normal::new(0.0, sigma).unwrap();
    let replicates = 200;
    let rounds = 300;
    let mut covered = 0;
    for _ in 0..replicates {
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..0.5)).collect();
        let mut ls = LeastSquaresState::new(d, 1e-6, Link::Identity, WidthRule::Ellipsoid, r_max).unwrap();
        for _ in 0..rounds {
            let phi: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 0.5).collect();
            let y: f64 = phi.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut rng);
            ls.push(&phi, y).unwrap();
        }
        ls.fit().unwrap();
        let log_cov = log_covering_number(d, c_theta, 1.0, alpha);
        let beta = beta_schedule(rounds, delta, alpha, sigma, log_cov, r_max);
        if ls.distance_sq(&theta).unwrap() <= beta {
            covered += 1;
        }
    }
    assert!(covered as f64 >= (1.0 - delta) * replicates as f64, "{covered}/{replicates}");
}

#[test]
fn noiseless_ridge_recovers_the_parameter() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let theta = [0.3, -0.2, 0.7];
    let mut ls = LeastSquaresState::new(3, 1e-9, Link::Identity, WidthRule::Ellipsoid, 1.0).unwrap();
    for _ in 0..50 {
        let phi: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        let y: f64 = phi.iter().zip(&theta).map(|(a, b)| a * b).sum();
        ls.push(&phi, y).unwrap();
    }
    let fitted = ls.fit().unwrap().to_vec();
    for (a, b) in fitted.iter().zip(&theta) {
        assert!((a - b).abs() < 1e-6, "{fitted:?}");
    }
}
