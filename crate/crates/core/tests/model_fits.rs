//! Closed-form fits against brute-force references and EM behaviour.

use cbas_core::models::{
    categorical_fit_weighted, gaussian_fit_weighted, linear_gaussian_fit_weighted, DiagonalGaussianModel,
    GenerativeModel, LatentModel, LinearGaussianLatentModel,
};
use cbas_core::reference::{numeric_weighted_mle, MleFamily, MleParams};
use cbas_core::{DesignPoint, Error};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gaussian_fit_matches_numeric_maximizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let dim = rng.random_range(1..=3);
        let m = rng.random_range(2..=50);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect();
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..2.0)).collect();
        let pts: Vec<DesignPoint> = rows.iter().map(|r| DesignPoint::Continuous(r.clone())).collect();
        let closed = gaussian_fit_weighted(&pts, &w, 1e-6).unwrap();
        let MleParams::Gaussian { mean, variance } =
            numeric_weighted_mle(&rows, &w, MleFamily::DiagonalGaussian { variance_floor: 1e-6 })
        else {
            unreachable!()
        };
        for d in 0..dim {
            assert!((closed.mean[d] - mean[d]).abs() < 1e-6, "{closed:?} vs {mean:?}");
            assert!((closed.variance[d] - variance[d]).abs() < 1e-6, "{closed:?} vs {variance:?}");
        }
    }
}

#[test]
fn categorical_fit_matches_numeric_maximizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..100 {
        let len = rng.random_range(1..=3);
        let alphabet = rng.random_range(2..=4);
        let m = rng.random_range(1..=50);
        let rows: Vec<Vec<usize>> = (0..m)
            .map(|_| (0..len).map(|_| rng.random_range(0..alphabet)).collect())
            .collect();
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..2.0)).collect();
        let pts: Vec<DesignPoint> = rows.iter().map(|r| DesignPoint::Sequence(r.clone())).collect();
        let closed = categorical_fit_weighted(&pts, &w, len, alphabet, 0.0).unwrap();
        let as_f64: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&a| a as f64).collect()).collect();
        let MleParams::Categorical { probs } = numeric_weighted_mle(&as_f64, &w, MleFamily::ProductCategorical { alphabet })
        else {
            unreachable!()
        };
        for (a, b) in closed.probs.iter().flatten().zip(probs.iter().flatten()) {
            assert!((a - b).abs() < 1e-6, "{:?} vs {probs:?}", closed.probs);
        }
    }
}

#[test]
fn refit_never_lowers_the_weighted_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = DiagonalGaussianModel::new(vec![0.5, -1.0], vec![2.0, 0.3]).unwrap();
    for _ in 0..20 {
        let xs: Vec<DesignPoint> = model.sample(&mut rng, 40).into_iter().map(|d| d.x).collect();
        let w: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
        let fitted = model.fit_weighted(&xs, &w).unwrap();
        assert!(fitted.weighted_log_likelihood(&xs, &w).unwrap() >= model.weighted_log_likelihood(&xs, &w).unwrap());
    }
}

fn generating_model() -> LinearGaussianLatentModel {
    let w = DMatrix::from_row_slice(4, 2, &[1.2, 0.0, -0.6, 0.9, 0.3, -1.0, 0.8, 0.4]);
    LinearGaussianLatentModel::new(w, vec![1.0, -2.0, 0.5, 0.0], 0.2).unwrap()
}

fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn em_recovers_the_generating_covariance() {
    let truth = generating_model();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let xs: Vec<DesignPoint> = truth.sample(&mut rng, 10_000).into_iter().map(|d| d.x).collect();
    let fitted = linear_gaussian_fit_weighted(&xs, &vec![1.0; xs.len()], 2).unwrap();
    let err = relative_frobenius(&fitted.marginal_covariance(), &truth.marginal_covariance());
    assert!(err < 0.05, "relative covariance error {err}");
}

#[test]
fn full_rank_latent_fit_reproduces_weighted_covariance() {
    let truth = generating_model();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let xs: Vec<DesignPoint> = truth.sample(&mut rng, 500).into_iter().map(|d| d.x).collect();
    let w: Vec<f64> = (0..500).map(|_| rng.random_range(0.1..1.0)).collect();
    let fitted = match linear_gaussian_fit_weighted(&xs, &w, 4) {
        Ok(m) => m,
        // sigma^2 creeps to the floor geometrically; the last iterate is what we check
        Err(Error::EmNotConverged { last, .. }) => *last,
        Err(e) => panic!("{e}"),
    };
    let total: f64 = w.iter().sum();
    let mut mean = [0.0; 4];
    for (x, wi) in xs.iter().zip(&w) {
        for (m, v) in mean.iter_mut().zip(x.as_continuous().unwrap()) {
            *m += wi * v / total;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(4, 4);
    for (x, wi) in xs.iter().zip(&w) {
        let v = x.as_continuous().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                cov[(i, j)] += wi * (v[i] - mean[i]) * (v[j] - mean[j]) / total;
            }
        }
    }
    let err = relative_frobenius(&fitted.marginal_covariance(), &cov);
    assert!(err < 1e-3, "relative covariance error {err}, noise {}", fitted.noise_variance);
}

#[test]
fn joint_density_marginalizes_to_the_closed_form() {
    let m = LinearGaussianLatentModel::new(DMatrix::from_row_slice(2, 1, &[0.9, -0.4]), vec![0.3, 0.1], 0.25).unwrap();
    let x = DesignPoint::Continuous(vec![0.7, -0.2]);
    let (lo, hi, n) = (-12.0, 12.0, 20_001);
    let h = (hi - lo) / (n - 1) as f64;
    let vals: Vec<f64> = (0..n)
        .map(|i| m.log_joint_density(&x, &[lo + h * i as f64]).unwrap().exp())
        .collect();
    let integral = h * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[n - 1]));
    let closed = m.log_density(&x).unwrap().exp();
    assert!((integral - closed).abs() < 1e-4 * closed.max(1.0), "{integral} vs {closed}");
}

#[test]
fn one_dimensional_latent_density_integrates_to_one() {
    let m = LinearGaussianLatentModel::new(DMatrix::from_element(1, 1, 0.8), vec![0.5], 0.3).unwrap();
    let (lo, hi, n) = (-15.0, 15.0, 30_001);
    let h = (hi - lo) / (n - 1) as f64;
    let vals: Vec<f64> = (0..n)
        .map(|i| m.log_density(&DesignPoint::scalar(lo + h * i as f64)).unwrap().exp())
        .collect();
    let integral = h * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[n - 1]));
    assert!((integral - 1.0).abs() < 1e-6);
}

#[test]
fn latent_fit_is_weight_scale_invariant() {
    let truth = generating_model();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let xs: Vec<DesignPoint> = truth.sample(&mut rng, 200).into_iter().map(|d| d.x).collect();
    let w: Vec<f64> = (0..200).map(|_| rng.random_range(0.1..1.0)).collect();
    let scaled: Vec<f64> = w.iter().map(|v| v * 1024.0).collect();
    let a = linear_gaussian_fit_weighted(&xs, &w, 2).unwrap();
    let b = linear_gaussian_fit_weighted(&xs, &scaled, 2).unwrap();
    assert_eq!(a, b);
}
