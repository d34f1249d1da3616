use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Oracle;
use crate::design::DesignPoint;
use crate::error::{Error, Result};
use crate::models::ProductCategoricalModel;

/// A noiseless ground-truth property function.
pub trait Landscape: Send + Sync + std::fmt::Debug {
    fn value(&self, x: &DesignPoint) -> Result<f64>;
}

/// Two unnormalized Gaussian bumps,
/// `f(x) = h1 exp(-(x - c1)^2 / (2 s1^2)) + h2 exp(-(x - c2)^2 / (2 s2^2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth1D {
    pub c1: f64,
    pub s1: f64,
    pub h1: f64,
    pub c2: f64,
    pub s2: f64,
    pub h2: f64,
}

impl GroundTruth1D {
    pub fn new(c1: f64, s1: f64, h1: f64, c2: f64, s2: f64, h2: f64) -> Result<Self> {
        if !(s1 > 0.0 && s2 > 0.0 && h1 > 0.0 && h2 > 0.0) {
            return Err(Error::InvalidParameter("bump widths and heights must be positive".into()));
        }
        Ok(Self { c1, s1, h1, c2, s2, h2 })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let bump = |c: f64, s: f64, h: f64| h * (-(x - c) * (x - c) / (2.0 * s * s)).exp();
        bump(self.c1, self.s1, self.h1) + bump(self.c2, self.s2, self.h2)
    }
}

impl Landscape for GroundTruth1D {
    fn value(&self, x: &DesignPoint) -> Result<f64> {
        let v = x.as_continuous()?;
        if v.len() != 1 {
            return Err(Error::InvalidDesign("expected a scalar point".into()));
        }
        Ok(self.eval(v[0]))
    }
}

/// Generation parameters for [`GroundTruthSequence`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceLandscapeParams {
    /// Standard deviation of single-mutation effects.
    pub site_scale: f64,
    /// Mean of pairwise effects between two mutated positions; negative
    /// values make stacked mutations interfere.
    pub pair_mean: f64,
    /// Standard deviation of pairwise effects.
    pub pair_scale: f64,
}

impl Default for SequenceLandscapeParams {
    fn default() -> Self {
        Self {
            site_scale: 1.0,
            pair_mean: -0.4,
            pair_scale: 0.3,
        }
    }
}

/// Explicit second-order function of a sequence,
/// `f(s) = c + sum_l a[l][s_l] + sum_{l < l'} B[(l, s_l), (l', s_l')]`.
///
/// Effects are measured relative to a wild type: `a[l][wt_l] = 0` and a pair
/// term vanishes unless both of its positions carry a mutation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSequence {
    pub length: usize,
    pub alphabet: usize,
    pub seed: u64,
    pub params: SequenceLandscapeParams,
    pub constant: f64,
    pub wild_type: Vec<usize>,
    pub site: Vec<Vec<f64>>,
    /// Pair blocks for `l < l'` in row-major pair order, each `A x A`
    /// flattened as `a * A + a'`.
    pub pair: Vec<Vec<f64>>,
}

impl GroundTruthSequence {
    /// Deterministic in `(length, alphabet, seed, params)`.
    pub fn generate(length: usize, alphabet: usize, seed: u64, params: SequenceLandscapeParams) -> Result<Self> {
        if length < 2 || alphabet < 2 {
            return Err(Error::InvalidParameter("need length >= 2 and alphabet >= 2".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wild_type: Vec<usize> = (0..length).map(|_| rng.random_range(0..alphabet)).collect();
        let site = wild_type
            .iter()
            .map(|&wt| {
                (0..alphabet)
                    .map(|a| {
                        let e: f64 = rng.sample(StandardNormal);
                        if a == wt { 0.0 } else { params.site_scale * e }
                    })
                    .collect()
            })
            .collect();
        let mut pair = Vec::with_capacity(length * (length - 1) / 2);
        for l in 0..length {
            for m in l + 1..length {
                let block = (0..alphabet * alphabet)
                    .map(|k| {
                        let e: f64 = rng.sample(StandardNormal);
                        let (a, b) = (k / alphabet, k % alphabet);
                        if a == wild_type[l] || b == wild_type[m] {
                            0.0
                        } else {
                            params.pair_mean + params.pair_scale * e
                        }
                    })
                    .collect();
                pair.push(block);
            }
        }
        Ok(Self {
            length,
            alphabet,
            seed,
            params,
            constant: 0.0,
            wild_type,
            site,
            pair,
        })
    }

    pub fn eval(&self, s: &[usize]) -> Result<f64> {
        if s.len() != self.length || s.iter().any(|&a| a >= self.alphabet) {
            return Err(Error::InvalidDesign(format!(
                "expected a length-{} sequence over {} symbols",
                self.length, self.alphabet
            )));
        }
        let mut total = self.constant;
        for (row, &a) in self.site.iter().zip(s) {
            total += row[a];
        }
        let mut k = 0;
        for l in 0..self.length {
            for m in l + 1..self.length {
                total += self.pair[k][s[l] * self.alphabet + s[m]];
                k += 1;
            }
        }
        Ok(total)
    }

    /// Sequences near the wild type: every position keeps its wild-type
    /// symbol with probability `1 - mutation_rate`, otherwise takes one of
    /// the other symbols uniformly.
    pub fn mutant_distribution(&self, mutation_rate: f64) -> Result<ProductCategoricalModel> {
        if !(0.0..=1.0).contains(&mutation_rate) {
            return Err(Error::InvalidParameter(format!("mutation rate {mutation_rate} outside [0, 1]")));
        }
        let other = mutation_rate / (self.alphabet - 1) as f64;
        let probs = self
            .wild_type
            .iter()
            .map(|&wt| {
                let mut row = vec![other; self.alphabet];
                row[wt] = 1.0 - mutation_rate;
                let residue = 1.0 - row.iter().sum::<f64>();
                row[wt] += residue;
                row
            })
            .collect();
        ProductCategoricalModel::new(probs)
    }
}

impl Landscape for GroundTruthSequence {
    fn value(&self, x: &DesignPoint) -> Result<f64> {
        self.eval(x.as_sequence()?)
    }
}

/// The ground truth itself as a Gaussian oracle with a fixed noise level.
#[derive(Clone, Debug)]
pub struct ExactOracle<T> {
    pub truth: T,
    pub sd: f64,
}

impl<T: Landscape> Oracle for ExactOracle<T> {
    fn components(&self, x: &DesignPoint) -> Result<Vec<(f64, f64)>> {
        Ok(vec![(self.truth.value(x)?, self.sd)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_bumps() {
        let g = GroundTruth1D::new(0.0, 1.0, 1.0, 4.0, 0.5, 2.0).unwrap();
        assert!((g.eval(0.0) - (1.0 + 2.0 * (-32.0f64).exp())).abs() < 1e-15);
        assert!((g.eval(4.0) - (2.0 + (-8.0f64).exp())).abs() < 1e-15);
        assert!(GroundTruth1D::new(0.0, 0.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn sequence_landscape_is_seed_deterministic() {
        let p = SequenceLandscapeParams::default();
        let a = GroundTruthSequence::generate(6, 4, 9, p).unwrap();
        let b = GroundTruthSequence::generate(6, 4, 9, p).unwrap();
        let c = GroundTruthSequence::generate(6, 4, 10, p).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.eval(&a.wild_type).unwrap(), 0.0);
    }

    #[test]
    fn sequence_landscape_matches_explicit_sum() {
        let g = GroundTruthSequence::generate(4, 3, 1, SequenceLandscapeParams::default()).unwrap();
        let s = [2, 0, 1, 1];
        let mut expected = g.constant;
        for (row, &v) in g.site.iter().zip(&s) {
            expected += row[v];
        }
        let mut k = 0;
        for l in 0..4 {
            for m in l + 1..4 {
                expected += g.pair[k][s[l] * 3 + s[m]];
                k += 1;
            }
        }
        assert_eq!(g.eval(&s).unwrap(), expected);
        assert!(g.eval(&[0, 0, 0]).is_err());
    }

    #[test]
    fn mutant_distribution_centres_on_wild_type() {
        let g = GroundTruthSequence::generate(5, 4, 2, SequenceLandscapeParams::default()).unwrap();
        let q = g.mutant_distribution(0.3).unwrap();
        for (row, &wt) in q.probs.iter().zip(&g.wild_type) {
            assert!((row[wt] - 0.7).abs() < 1e-12);
        }
    }
}
