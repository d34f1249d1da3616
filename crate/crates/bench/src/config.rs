//! Experiment configuration. Every field has a default, so `{}` is a valid
//! config; unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::PathBuf;

use cbas_core::oracle::{GroundTruth1D, MeanFamily1D, SequenceLandscapeParams};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "illustrative-1d")]
    Illustrative1d,
    #[serde(rename = "sequence-design")]
    SequenceDesign,
    #[serde(rename = "q-sweep")]
    QSweep,
    #[serde(rename = "specification-1d")]
    Specification1d,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Illustrative1d,
        Scenario::SequenceDesign,
        Scenario::QSweep,
        Scenario::Specification1d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Illustrative1d => "illustrative-1d",
            Scenario::SequenceDesign => "sequence-design",
            Scenario::QSweep => "q-sweep",
            Scenario::Specification1d => "specification-1d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cbas,
    Dbas,
    Rwr,
    CemPi,
    Fb,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Cbas, Method::Dbas, Method::Rwr, Method::CemPi, Method::Fb];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cbas => "cbas",
            Method::Dbas => "dbas",
            Method::Rwr => "rwr",
            Method::CemPi => "cem-pi",
            Method::Fb => "fb",
        }
    }
}

/// Oracle construction for both experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    /// Share of the 1D domain, from its left end, covered by the
    /// partial-domain training data.
    pub training_domain_fraction: f64,
    /// Sequence oracles only see pool members at or below this ground-truth
    /// percentile.
    pub training_percentile: f64,
    /// Labelled points per 1D oracle.
    pub training_points_1d: usize,
    /// Labelled sequences for the sequence oracles.
    pub training_points: usize,
    pub ensemble_sizes: Vec<usize>,
    /// Variance of the Gaussian label noise.
    pub noise_variance: f64,
    /// Share of the 1D data held out to measure the oracle variance.
    pub holdout_fraction: f64,
    pub mean_family: MeanFamily1D,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            training_domain_fraction: 0.4,
            training_percentile: 0.2,
            training_points_1d: 3000,
            training_points: 1000,
            ensemble_sizes: vec![1, 5, 20],
            noise_variance: 0.05,
            holdout_fraction: 0.2,
            mean_family: MeanFamily1D::NaturalSpline { knots: 6 },
        }
    }
}

/// Generative model settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    /// Pseudo-count added to every symbol when fitting the sequence prior
    /// and the feedback generator.
    pub prior_smoothing: f64,
    /// Floor on Gaussian search-model variances.
    pub variance_floor: f64,
    /// Uniform mixing weight applied to every sequence search-model refit.
    pub search_floor: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            prior_smoothing: cbas_core::models::DEFAULT_PRIOR_SMOOTHING,
            variance_floor: cbas_core::models::DEFAULT_VARIANCE_FLOOR,
            search_floor: 0.01,
        }
    }
}

/// Ground-truth functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeSpec {
    pub bumps: GroundTruth1D,
    /// 1D design domain; also the domain of the target set threshold.
    pub domain: [f64; 2],
    pub sequence_length: usize,
    pub alphabet: usize,
    /// Sequences drawn before truncating to the training percentile.
    pub pool_size: usize,
    /// Per-position mutation probability of the pool around the wild type.
    pub mutation_rate: f64,
    pub sequence: SequenceLandscapeParams,
}

impl Default for LandscapeSpec {
    fn default() -> Self {
        Self {
            bumps: GroundTruth1D {
                c1: 0.6,
                s1: 2.0,
                h1: 1.0,
                c2: 4.5,
                s2: 0.5,
                h2: 0.3,
            },
            domain: [-3.0, 6.0],
            sequence_length: 20,
            alphabet: 20,
            pool_size: 25_000,
            mutation_rate: 0.1,
            sequence: SequenceLandscapeParams::default(),
        }
    }
}

/// Quadrature grid for the 1D target conditional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: -15.0,
            hi: 20.0,
            points: 7001,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSpec {
    pub rwr_alpha: f64,
    pub cem_quantile: f64,
    pub fb_percentile: f64,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self {
            rwr_alpha: cbas_core::baselines::DEFAULT_RWR_ALPHA,
            cem_quantile: cbas_core::baselines::DEFAULT_CEM_QUANTILE,
            fb_percentile: cbas_core::baselines::DEFAULT_FB_PERCENTILE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecificationSpec {
    /// `y0` is the full-domain oracle mean at this point.
    pub anchor_x: f64,
    /// Half-width of the target interval around `y0`.
    pub epsilon: f64,
}

impl Default for SpecificationSpec {
    fn default() -> Self {
        Self {
            anchor_x: 0.0,
            epsilon: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    /// Run indices; each (method, oracle, index) cell gets its own derived
    /// seed.
    pub seeds: Vec<u64>,
    /// Relaxation percentile `Q`.
    pub q: f64,
    /// Samples per iteration `M`.
    pub m: usize,
    /// Total samples per run in the sequence scenarios.
    pub budget: usize,
    /// Iterations per run in the 1D scenarios.
    pub iterations: usize,
    /// `Q` values compared by the q-sweep scenario.
    pub q_values: Vec<f64>,
    /// Largest relative spread of the q-sweep final values considered flat.
    pub q_band: f64,
    pub oracle: OracleSpec,
    pub model: ModelSpec,
    pub landscape: LandscapeSpec,
    pub grid: GridSpec,
    pub baselines: BaselineSpec,
    pub specification: SpecificationSpec,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::SequenceDesign,
            methods: Method::ALL.to_vec(),
            master_seed: 0,
            seeds: vec![0, 1, 2],
            q: 1.0,
            m: 100,
            budget: 10_000,
            iterations: 50,
            q_values: vec![0.5, 0.75, 1.0],
            q_band: 0.15,
            oracle: OracleSpec::default(),
            model: ModelSpec::default(),
            landscape: LandscapeSpec::default(),
            grid: GridSpec::default(),
            baselines: BaselineSpec::default(),
            specification: SpecificationSpec::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            return bad("methods must not repeat".into());
        }
        if self.seeds.is_empty() || self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be a non-empty list without repeats".into());
        }
        if !unit(self.q) {
            return bad(format!("q = {} outside (0, 1]", self.q));
        }
        if self.m < 2 {
            return bad("m must be at least 2".into());
        }
        if self.budget < self.m {
            return bad(format!("budget {} is below one batch of {}", self.budget, self.m));
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.q_values.is_empty() || !self.q_values.iter().all(|&q| unit(q)) {
            return bad("q_values must be a non-empty list inside (0, 1]".into());
        }
        if !(self.q_band >= 0.0) {
            return bad("q_band must be non-negative".into());
        }
        let o = &self.oracle;
        if !(o.training_domain_fraction > 0.0 && o.training_domain_fraction <= 1.0) {
            return bad("training_domain_fraction outside (0, 1]".into());
        }
        if !unit(o.training_percentile) {
            return bad("training_percentile outside (0, 1]".into());
        }
        if o.ensemble_sizes.is_empty() || o.ensemble_sizes.contains(&0) {
            return bad("ensemble_sizes must be non-empty and positive".into());
        }
        if !(o.noise_variance >= 0.0 && o.noise_variance.is_finite()) {
            return bad("noise_variance must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&o.holdout_fraction) || o.holdout_fraction == 0.0 {
            return bad("holdout_fraction outside (0, 1)".into());
        }
        if o.training_points < 2 || o.training_points_1d < 10 {
            return bad("too few training points".into());
        }
        if !(self.model.prior_smoothing >= 0.0) || !(self.model.variance_floor > 0.0) {
            return bad("prior_smoothing must be >= 0 and variance_floor > 0".into());
        }
        if !(0.0..1.0).contains(&self.model.search_floor) {
            return bad("search_floor must lie in [0, 1)".into());
        }
        let l = &self.landscape;
        cbas_core::oracle::GroundTruth1D::new(l.bumps.c1, l.bumps.s1, l.bumps.h1, l.bumps.c2, l.bumps.s2, l.bumps.h2)
            .map_err(|e| BenchError::Config(e.to_string()))?;
        if !(l.domain[0] < l.domain[1]) {
            return bad("landscape domain must be an increasing pair".into());
        }
        if l.sequence_length < 2 || l.alphabet < 2 {
            return bad("sequence_length and alphabet must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&l.mutation_rate) {
            return bad("mutation_rate outside [0, 1]".into());
        }
        if (l.pool_size as f64) * o.training_percentile < o.training_points as f64 {
            return bad(format!(
                "pool of {} truncated at {} cannot supply {} training sequences",
                l.pool_size, o.training_percentile, o.training_points
            ));
        }
        if !(self.grid.lo < self.grid.hi) || self.grid.points < cbas_core::reference::MIN_GRID_POINTS {
            return bad(format!(
                "grid must be increasing with at least {} points",
                cbas_core::reference::MIN_GRID_POINTS
            ));
        }
        if !(self.grid.lo <= l.domain[0] && self.grid.hi >= l.domain[1]) {
            return bad("grid must cover the landscape domain".into());
        }
        let b = &self.baselines;
        if !(b.rwr_alpha.is_finite() && b.rwr_alpha >= 0.0) || !unit(b.cem_quantile) || !unit(b.fb_percentile) {
            return bad("baseline settings out of range".into());
        }
        if !(self.specification.epsilon >= 0.0) {
            return bad("specification epsilon must be non-negative".into());
        }
        if !(l.domain[0] <= self.specification.anchor_x && self.specification.anchor_x <= l.domain[1]) {
            return bad("specification anchor must lie inside the domain".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.budget, 10_000);
        assert_eq!(cfg.m, 100);
        assert_eq!(cfg.seeds.len(), 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"oracle": {"knots": 3}}"#).is_err());
    }

    #[test]
    fn names_round_trip() {
        let cfg = ExperimentConfig::from_json(r#"{"scenario": "q-sweep", "methods": ["cem-pi", "fb"]}"#).unwrap();
        assert_eq!(cfg.scenario, Scenario::QSweep);
        assert_eq!(cfg.methods, vec![Method::CemPi, Method::Fb]);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        for s in Scenario::ALL {
            assert_eq!(Scenario::parse(s.name()), Some(s));
        }
    }

    #[test]
    fn out_of_range_values_are_config_errors() {
        for bad in [
            r#"{"q": 0}"#,
            r#"{"m": 1}"#,
            r#"{"budget": 10}"#,
            r#"{"methods": []}"#,
            r#"{"methods": ["cbas", "cbas"]}"#,
            r#"{"seeds": [1, 1]}"#,
            r#"{"grid": {"points": 100}}"#,
            r#"{"oracle": {"ensemble_sizes": [0]}}"#,
            r#"{"landscape": {"pool_size": 100}}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(bad), Err(BenchError::Config(_))), "{bad}");
        }
    }
}
