//! Weight identities and whole-run invariants of the search loop.

use cbas_core::baselines::{run_cem_pi, run_dbas, run_feedback, run_rwr, uniform_refit};
use cbas_core::engine::{
    cbas_log_weight, cbas_weight, cbas_weight_joint, run_cbas, run_cbas_latent, CbASConfig, RunOutcome,
};
use cbas_core::event::DesideratumEvent;
use cbas_core::models::{
    DiagonalGaussianModel, GenerativeModel, LatentModel, LinearGaussianLatentModel, ProductCategoricalModel,
};
use cbas_core::oracle::{ExactOracle, GroundTruth1D, MeanFunction, Oracle, RegressionOracle};
use cbas_core::DesignPoint;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quadratic_oracle() -> RegressionOracle {
    RegressionOracle {
        mean: MeanFunction::Polynomial {
            center: 0.0,
            scale: 1.0,
            coefficients: vec![1.0, 0.5, -0.2],
        },
        noise_variance: 0.1,
    }
}

fn assert_monotone<M>(out: &RunOutcome<M>, increasing: bool) {
    for pair in out.records.windows(2) {
        let (a, b) = (pair[0].gamma, pair[1].gamma);
        if increasing {
            assert!(b >= a, "{} at t={}: {a} -> {b}", out.method, pair[1].t);
        } else {
            assert!(b <= a, "{} at t={}: {a} -> {b}", out.method, pair[1].t);
        }
    }
}

#[test]
fn cbas_equals_dbas_at_the_first_iteration() {
    let prior = DiagonalGaussianModel::univariate(0.0, 2.0).unwrap();
    let o = quadratic_oracle();
    let ev = DesideratumEvent::maximize(f64::INFINITY);
    let config = CbASConfig {
        max_iterations: Some(3),
        ..CbASConfig::default()
    };
    let c = run_cbas(&prior, &prior, &[&o], &ev, &config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let d = run_dbas(&prior, &[&o], &ev, &config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(c.records[0].samples, d.records[0].samples);
    assert_eq!(c.records[0].weights, d.records[0].weights);
    assert_eq!(c.records[0].log_weight_scale, d.records[0].log_weight_scale);
    // unnormalized weights agree as well
    for (x, w) in c.records[0].samples.iter().zip(&c.records[0].weights) {
        let direct = cbas_weight(&prior, &prior, x, &c.records[0].event, &[&o]).unwrap();
        let rebuilt = w * c.records[0].log_weight_scale.exp();
        assert!((direct - rebuilt).abs() <= 1e-12 * direct.max(1e-300));
    }
}

#[test]
fn weights_are_symmetric_in_identical_densities() {
    let a = DiagonalGaussianModel::univariate(0.2, 1.3).unwrap();
    let b = a.clone();
    let o = quadratic_oracle();
    let ev = DesideratumEvent::maximize(0.7);
    for x in [-1.0, 0.0, 2.5] {
        let x = DesignPoint::scalar(x);
        assert_eq!(
            cbas_log_weight(&a, &b, &x, &ev, &[&o]).unwrap(),
            cbas_log_weight(&b, &a, &x, &ev, &[&o]).unwrap()
        );
    }
}

fn random_latent(rng: &mut ChaCha8Rng, l: usize, d: usize) -> LinearGaussianLatentModel {
    let w = DMatrix::from_fn(l, d, |_, _| rng.random_range(-1.0..1.0));
    let b = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
    LinearGaussianLatentModel::new(w, b, rng.random_range(0.1..1.0)).unwrap()
}

#[derive(Debug)]
struct SumOracle;

impl Oracle for SumOracle {
    fn components(&self, x: &DesignPoint) -> cbas_core::Result<Vec<(f64, f64)>> {
        Ok(vec![(x.as_continuous()?.iter().sum(), 0.7)])
    }
}

#[test]
fn shared_latent_prior_simplification_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let ev = DesideratumEvent::maximize(0.5);
    for _ in 0..200 {
        let p = random_latent(&mut rng, 3, 2);
        let q = random_latent(&mut rng, 3, 2);
        let draw = q.sample(&mut rng, 1).pop().unwrap();
        let z = draw.z.as_deref().unwrap();
        let simplified = cbas_weight_joint(&p, &q, &draw.x, z, &ev, &[&SumOracle]).unwrap();
        let full = (p.log_joint_density(&draw.x, z).unwrap() - q.log_joint_density(&draw.x, z).unwrap()
            + SumOracle.ln_survival(&draw.x, 0.5).unwrap())
        .exp();
        assert!((simplified - full).abs() <= 1e-12 * full.max(1.0), "{simplified} vs {full}");
    }
}

#[test]
fn joint_and_marginal_weights_agree_in_expectation() {
    let prior = LinearGaussianLatentModel::new(DMatrix::from_row_slice(2, 1, &[0.8, 0.5]), vec![0.0, 0.0], 0.5).unwrap();
    let search = LinearGaussianLatentModel::new(DMatrix::from_row_slice(2, 1, &[0.9, 0.4]), vec![0.2, 0.1], 0.45).unwrap();
    let ev = DesideratumEvent::maximize(0.8);
    let n = 100_000;
    let draws = search.sample(&mut ChaCha8Rng::seed_from_u64(31), n);
    let (mut sum_j, mut sum_m, mut sum_d, mut sum_d2) = (0.0, 0.0, 0.0, 0.0);
    for d in &draws {
        let wj = cbas_weight_joint(&prior, &search, &d.x, d.z.as_deref().unwrap(), &ev, &[&SumOracle]).unwrap();
        let wm = cbas_weight(&prior, &search, &d.x, &ev, &[&SumOracle]).unwrap();
        sum_j += wj;
        sum_m += wm;
        sum_d += wj - wm;
        sum_d2 += (wj - wm) * (wj - wm);
    }
    let nf = n as f64;
    let diff = sum_d / nf;
    let se = ((sum_d2 / nf - diff * diff) / nf).sqrt();
    assert!(diff.abs() <= 3.0 * se, "joint {} marginal {} se {se}", sum_j / nf, sum_m / nf);
}

#[test]
fn runs_are_bit_identical_under_a_fixed_seed() {
    let prior = DiagonalGaussianModel::univariate(0.0, 1.0).unwrap();
    let o = quadratic_oracle();
    let ev = DesideratumEvent::maximize(f64::INFINITY);
    let config = CbASConfig::default();
    let a = run_cbas(&prior, &prior, &[&o], &ev, &config, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
    let b = run_cbas(&prior, &prior, &[&o], &ev, &config, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn thresholds_are_monotone_for_every_method() {
    let prior = DiagonalGaussianModel::univariate(0.0, 1.0).unwrap();
    let o = quadratic_oracle();
    let max_ev = DesideratumEvent::maximize(f64::INFINITY);
    let config = CbASConfig {
        max_iterations: Some(20),
        quantile: 0.8,
        ..CbASConfig::default()
    };
    let rng = |s| ChaCha8Rng::seed_from_u64(s);
    assert_monotone(&run_cbas(&prior, &prior, &[&o], &max_ev, &config, &mut rng(1)).unwrap(), true);
    assert_monotone(&run_dbas(&prior, &[&o], &max_ev, &config, &mut rng(2)).unwrap(), true);
    assert_monotone(&run_rwr(&prior, &o, 50.0, &config, &mut rng(3)).unwrap(), true);
    assert_monotone(&run_cem_pi(&prior, &o, 0.8, &config, &mut rng(4)).unwrap(), true);
    let pool: Vec<DesignPoint> = prior.sample(&mut rng(5), 200).into_iter().map(|d| d.x).collect();
    assert_monotone(
        &run_feedback(&prior, &o, pool, 0.8, uniform_refit(), &config, &mut rng(6)).unwrap(),
        true,
    );
    let spec = DesideratumEvent::specify(1.2, 0.0);
    let out = run_cbas(&prior, &prior, &[&o], &spec, &config, &mut rng(7)).unwrap();
    assert_monotone(&out, false);

    let both = DesideratumEvent::Conjunction {
        events: vec![DesideratumEvent::maximize(f64::INFINITY), DesideratumEvent::specify(0.0, 0.0)],
    };
    let out = run_cbas(&prior, &prior, &[&o, &SumOracle], &both, &config, &mut rng(8)).unwrap();
    for pair in out.records.windows(2) {
        assert!(pair[1].event.is_subset_of(&pair[0].event));
    }
}

#[test]
fn latent_search_runs_on_the_joint_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let prior = random_latent(&mut rng, 2, 1);
    let config = CbASConfig {
        max_iterations: Some(10),
        ..CbASConfig::default()
    };
    let out = run_cbas_latent(&prior, &prior, &[&SumOracle], &DesideratumEvent::maximize(f64::INFINITY), &config, &mut rng).unwrap();
    assert_eq!(out.records.len(), 10);
    assert!(out.records.iter().all(|r| r.latents.as_ref().is_some_and(|z| z.len() == 100)));
    assert_eq!(out.records[0].weights.len(), 100);
}

#[test]
fn exact_oracle_with_broad_prior_finds_the_global_maximum() {
    let truth = GroundTruth1D::new(0.0, 1.0, 1.0, 4.0, 0.6, 1.5).unwrap();
    let oracle = ExactOracle { truth, sd: 1e-3 };
    let prior = DiagonalGaussianModel::univariate(2.0, 25.0).unwrap();
    let ev = DesideratumEvent::maximize(f64::INFINITY);
    let config = CbASConfig {
        quantile: 0.9,
        ..CbASConfig::default()
    };
    let c = run_cbas(&prior, &prior, &[&oracle], &ev, &config, &mut ChaCha8Rng::seed_from_u64(50)).unwrap();
    let d = run_dbas(&prior, &[&oracle], &ev, &config, &mut ChaCha8Rng::seed_from_u64(50)).unwrap();
    for out in [&c.final_model, &d.final_model] {
        assert!((out.mean[0] - 4.0).abs() < 0.1, "{out:?}");
        assert!(out.variance[0] < 0.05, "{out:?}");
    }
}

#[test]
fn sequence_search_keeps_probabilities_valid() {
    let prior = ProductCategoricalModel::new(vec![vec![0.4, 0.3, 0.3]; 5]).unwrap();
    let o = RegressionOracle {
        mean: MeanFunction::OneHotLinear {
            intercept: 0.0,
            weights: vec![vec![0.0, 1.0, -1.0]; 5],
        },
        noise_variance: 0.2,
    };
    let config = CbASConfig {
        max_iterations: None,
        sequence_budget: Some(2_000),
        ..CbASConfig::default()
    };
    let out = run_cbas(&prior, &prior, &[&o], &DesideratumEvent::maximize(f64::INFINITY), &config, &mut ChaCha8Rng::seed_from_u64(60)).unwrap();
    assert_eq!(out.records.len(), 20);
    for row in &out.final_model.probs {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // the favoured symbol wins at every site
        assert!(row[1] > row[0] && row[1] > row[2], "{row:?}");
    }
}
