use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_weights, Draw, GenerativeModel, ModelSnapshot};
use crate::design::DesignPoint;
use crate::error::{Error, Result};

/// Pseudo-count used when fitting a prior, so unseen sequences keep nonzero
/// density and the importance ratio `p0 / q` never divides zero by something
/// positive.
pub const DEFAULT_PRIOR_SMOOTHING: f64 = 0.1;

/// Independent categorical distribution at every sequence position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductCategoricalModel {
    /// `probs[l][a]`: probability of symbol `a` at position `l`.
    pub probs: Vec<Vec<f64>>,
}

impl ProductCategoricalModel {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let alphabet = probs.first().map_or(0, Vec::len);
        if probs.is_empty() || alphabet == 0 {
            return Err(Error::InvalidParameter("empty probability table".into()));
        }
        for (l, row) in probs.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if row.len() != alphabet
                || row.iter().any(|p| !p.is_finite() || *p < 0.0)
                || (total - 1.0).abs() > 1e-12
            {
                return Err(Error::InvalidParameter(format!(
                    "row {l} is not a distribution over {alphabet} symbols"
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(length: usize, alphabet: usize) -> Self {
        Self {
            probs: vec![vec![1.0 / alphabet as f64; alphabet]; length],
        }
    }

    pub fn length(&self) -> usize {
        self.probs.len()
    }

    pub fn alphabet(&self) -> usize {
        self.probs[0].len()
    }

    pub fn fit_weighted_smoothed(
        &self,
        samples: &[DesignPoint],
        weights: &[f64],
        smoothing: f64,
    ) -> Result<Self> {
        categorical_fit_weighted(samples, weights, self.length(), self.alphabet(), smoothing)
    }
}

/// `probs[l][a] = (smoothing + sum_{i: x_i[l] = a} w_i) / (A * smoothing + sum_i w_i)`.
pub fn categorical_fit_weighted(
    samples: &[DesignPoint],
    weights: &[f64],
    length: usize,
    alphabet: usize,
    smoothing: f64,
) -> Result<ProductCategoricalModel> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidParameter(format!("smoothing {smoothing} must be >= 0")));
    }
    let total = match check_weights(samples.len(), weights) {
        Ok(t) => t,
        Err(Error::DegenerateWeights) if smoothing > 0.0 => 0.0,
        Err(e) => return Err(e),
    };
    let mut counts = vec![vec![smoothing; alphabet]; length];
    for (x, &w) in samples.iter().zip(weights) {
        let s = x.as_sequence()?;
        check_sequence(s, length, alphabet)?;
        for (row, &a) in counts.iter_mut().zip(s) {
            row[a] += w;
        }
    }
    let denom = alphabet as f64 * smoothing + total;
    for row in counts.iter_mut() {
        row.iter_mut().for_each(|c| *c /= denom);
        // Push the rounding residue onto the largest entry so rows sum to 1.
        let residue = 1.0 - row.iter().sum::<f64>();
        let argmax = (0..alphabet)
            .max_by(|&i, &j| row[i].total_cmp(&row[j]))
            .unwrap_or(0);
        row[argmax] += residue;
    }
    Ok(ProductCategoricalModel { probs: counts })
}

fn check_sequence(s: &[usize], length: usize, alphabet: usize) -> Result<()> {
    if s.len() != length {
        return Err(Error::InvalidDesign(format!(
            "expected sequence length {length}, got {}",
            s.len()
        )));
    }
    if let Some(&a) = s.iter().find(|&&a| a >= alphabet) {
        return Err(Error::InvalidDesign(format!(
            "symbol {a} outside alphabet of size {alphabet}"
        )));
    }
    Ok(())
}

impl GenerativeModel for ProductCategoricalModel {
    fn kind(&self) -> &'static str {
        "product_categorical"
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<Draw> {
        (0..m)
            .map(|_| {
                let seq = self
                    .probs
                    .iter()
                    .map(|row| {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        for (a, p) in row.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                return a;
                            }
                        }
                        // u landed in the rounding gap above the last cumulative sum
                        row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
                    })
                    .collect();
                Draw {
                    x: DesignPoint::Sequence(seq),
                    z: None,
                }
            })
            .collect()
    }

    fn log_density(&self, x: &DesignPoint) -> Result<f64> {
        let s = x.as_sequence()?;
        check_sequence(s, self.length(), self.alphabet())?;
        Ok(s.iter().zip(&self.probs).map(|(&a, row)| row[a].ln()).sum())
    }

    /// Search-time refit: no smoothing, so the fit is the exact weighted MLE.
    fn fit_weighted(&self, samples: &[DesignPoint], weights: &[f64]) -> Result<Self> {
        self.fit_weighted_smoothed(samples, weights, 0.0)
    }

    fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot::ProductCategorical(self.clone())
    }
}

/// Product categorical whose search-time refit mixes the exact weighted MLE
/// with the uniform distribution, `(1 - floor) * mle + floor / A`, so no
/// symbol ever reaches probability zero. Without it a symbol absent from one
/// weighted batch can never be sampled again and searches freeze onto a
/// single sequence within a few iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlooredCategoricalModel {
    pub model: ProductCategoricalModel,
    /// Uniform mixing weight in `[0, 1)`.
    pub floor: f64,
}

impl FlooredCategoricalModel {
    pub fn new(model: ProductCategoricalModel, floor: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&floor) {
            return Err(Error::InvalidParameter(format!("floor {floor} must lie in [0, 1)")));
        }
        Ok(Self { model, floor })
    }
}

impl GenerativeModel for FlooredCategoricalModel {
    fn kind(&self) -> &'static str {
        self.model.kind()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<Draw> {
        self.model.sample(rng, m)
    }

    fn log_density(&self, x: &DesignPoint) -> Result<f64> {
        self.model.log_density(x)
    }

    fn fit_weighted(&self, samples: &[DesignPoint], weights: &[f64]) -> Result<Self> {
        let mut model = self.model.fit_weighted(samples, weights)?;
        if self.floor > 0.0 {
            let uniform = self.floor / model.alphabet() as f64;
            for row in model.probs.iter_mut() {
                row.iter_mut().for_each(|p| *p = (1.0 - self.floor) * *p + uniform);
                let residue = 1.0 - row.iter().sum::<f64>();
                let argmax = (0..row.len()).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap_or(0);
                row[argmax] += residue;
            }
        }
        Ok(Self { model, floor: self.floor })
    }

    fn snapshot(&self) -> ModelSnapshot {
        self.model.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seqs(v: &[&[usize]]) -> Vec<DesignPoint> {
        v.iter().map(|s| DesignPoint::Sequence(s.to_vec())).collect()
    }

    #[test]
    fn fit_examples() {
        let m = categorical_fit_weighted(&seqs(&[&[0], &[1]]), &[1.0, 1.0], 1, 2, 0.0).unwrap();
        assert_eq!(m.probs, vec![vec![0.5, 0.5]]);

        let m = categorical_fit_weighted(&seqs(&[&[0]]), &[1.0], 1, 2, 1.0).unwrap();
        assert_relative_eq!(m.probs[0][0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m.probs[0][1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_only_without_smoothing() {
        let s = seqs(&[&[0, 1]]);
        assert!(matches!(
            categorical_fit_weighted(&s, &[0.0], 2, 3, 0.0),
            Err(Error::DegenerateWeights)
        ));
        let m = categorical_fit_weighted(&s, &[0.0], 2, 3, 0.5).unwrap();
        assert_eq!(m, ProductCategoricalModel::uniform(2, 3));
    }

    #[test]
    fn uniform_density() {
        let m = ProductCategoricalModel::uniform(3, 4);
        let lp = m.log_density(&DesignPoint::Sequence(vec![3, 0, 2])).unwrap();
        assert_relative_eq!(lp, (1.0f64 / 64.0).ln(), epsilon = 1e-14);
    }

    #[test]
    fn floored_refit_mixes_with_uniform() {
        let base = ProductCategoricalModel::uniform(2, 4);
        let m = FlooredCategoricalModel::new(base, 0.2).unwrap();
        let fit = m.fit_weighted(&seqs(&[&[1, 3]]), &[2.0]).unwrap();
        assert_relative_eq!(fit.model.probs[0][1], 0.85, epsilon = 1e-15);
        assert_relative_eq!(fit.model.probs[0][0], 0.05, epsilon = 1e-15);
        assert_relative_eq!(fit.model.probs[1][3], 0.85, epsilon = 1e-15);
        let scaled = m.fit_weighted(&seqs(&[&[1, 3]]), &[7.0]).unwrap();
        assert_eq!(fit, scaled);
        assert!(FlooredCategoricalModel::new(ProductCategoricalModel::uniform(1, 2), 1.0).is_err());
    }

    #[test]
    fn malformed_sequences_are_rejected() {
        let m = ProductCategoricalModel::uniform(3, 4);
        assert!(m.log_density(&DesignPoint::Sequence(vec![0, 1])).is_err());
        assert!(m.log_density(&DesignPoint::Sequence(vec![0, 1, 4])).is_err());
        assert!(m.log_density(&DesignPoint::scalar(0.0)).is_err());
    }

    #[test]
    fn sampling_matches_marginals() {
        let m = ProductCategoricalModel::new(vec![vec![0.2, 0.5, 0.3], vec![0.9, 0.0, 0.1]]).unwrap();
        let n = 100_000;
        let draws = m.sample(&mut ChaCha8Rng::seed_from_u64(3), n);
        for l in 0..2 {
            for a in 0..3 {
                let p = m.probs[l][a];
                let freq = draws
                    .iter()
                    .filter(|d| d.x.as_sequence().unwrap()[l] == a)
                    .count() as f64
                    / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((freq - p).abs() <= 4.0 * se + 1e-12, "l={l} a={a}: {freq}");
            }
        }
    }

    proptest! {
        #[test]
        fn rows_are_distributions_and_scale_invariant(
            raw in prop::collection::vec((prop::collection::vec(0usize..4, 3), 0.01f64..5.0), 1..25),
            c in 0.01f64..100.0,
            smoothing in 0.0f64..2.0,
        ) {
            let s: Vec<DesignPoint> = raw.iter().map(|(q, _)| DesignPoint::Sequence(q.clone())).collect();
            let w: Vec<f64> = raw.iter().map(|(_, w)| *w).collect();
            let m = categorical_fit_weighted(&s, &w, 3, 4, smoothing).unwrap();
            for row in &m.probs {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
            let a = categorical_fit_weighted(&s, &w, 3, 4, 0.0).unwrap();
            let b = categorical_fit_weighted(&s, &scaled, 3, 4, 0.0).unwrap();
            for (ra, rb) in a.probs.iter().zip(&b.probs) {
                for (x, y) in ra.iter().zip(rb) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }
}
