//! Desideratum events `S` over property values and their relaxation schedule.

use serde::{Deserialize, Serialize};

use crate::design::DesignPoint;
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::stats::nearest_rank_percentile;

/// A set of acceptable property values.
///
/// `Maximize` is the closed half-line `y >= gamma`; `Specify` is the closed
/// interval `[y0 - gamma, y0 + gamma]`; `Conjunction` requires every child
/// event, each child scored by its own oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesideratumEvent {
    Maximize {
        #[serde(with = "crate::event::extended_f64")]
        gamma: f64,
    },
    Specify {
        y0: f64,
        #[serde(with = "crate::event::extended_f64")]
        gamma: f64,
    },
    Conjunction { events: Vec<DesideratumEvent> },
}

/// True iff `y` lies in the set encoded by `event`.
pub fn event_membership(event: &DesideratumEvent, y: f64) -> bool {
    match event {
        DesideratumEvent::Maximize { gamma } => y >= *gamma,
        DesideratumEvent::Specify { y0, gamma } => (y - y0).abs() <= *gamma,
        DesideratumEvent::Conjunction { events } => events.iter().all(|e| event_membership(e, y)),
    }
}

impl DesideratumEvent {
    pub fn maximize(gamma: f64) -> Self {
        DesideratumEvent::Maximize { gamma }
    }

    pub fn specify(y0: f64, gamma: f64) -> Self {
        DesideratumEvent::Specify { y0, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DesideratumEvent::Maximize { gamma } if gamma.is_nan() => {
                Err(Error::InvalidParameter("threshold is NaN".into()))
            }
            DesideratumEvent::Specify { y0, gamma } => {
                if !y0.is_finite() {
                    Err(Error::InvalidParameter("specification target must be finite".into()))
                } else if gamma.is_nan() || *gamma < 0.0 {
                    Err(Error::InvalidParameter(format!(
                        "specification half-width {gamma} must be >= 0"
                    )))
                } else {
                    Ok(())
                }
            }
            DesideratumEvent::Conjunction { events } => {
                if events.is_empty() {
                    return Err(Error::InvalidParameter("empty conjunction".into()));
                }
                events.iter().try_for_each(DesideratumEvent::validate)
            }
            _ => Ok(()),
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        event_membership(self, y)
    }

    /// Leaf events in depth-first order. Leaf `i` is scored by oracle `i`.
    pub fn leaves(&self) -> Vec<&DesideratumEvent> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a DesideratumEvent>) {
        match self {
            DesideratumEvent::Conjunction { events } => {
                events.iter().for_each(|e| e.collect_leaves(out));
            }
            leaf => out.push(leaf),
        }
    }

    /// The threshold (or half-width) of the first leaf.
    pub fn gamma(&self) -> f64 {
        match self.leaves()[0] {
            DesideratumEvent::Maximize { gamma } | DesideratumEvent::Specify { gamma, .. } => *gamma,
            DesideratumEvent::Conjunction { .. } => unreachable!("leaves are never conjunctions"),
        }
    }

    pub fn leaf_gammas(&self) -> Vec<f64> {
        self.leaves()
            .into_iter()
            .map(|leaf| match leaf {
                DesideratumEvent::Maximize { gamma } | DesideratumEvent::Specify { gamma, .. } => *gamma,
                DesideratumEvent::Conjunction { .. } => unreachable!(),
            })
            .collect()
    }

    /// The widest event of the same shape: `gamma = -inf` for thresholds and
    /// `gamma = +inf` for specifications. Every relaxation schedule starts here.
    pub fn fully_relaxed(&self) -> Self {
        match self {
            DesideratumEvent::Maximize { .. } => DesideratumEvent::Maximize {
                gamma: f64::NEG_INFINITY,
            },
            DesideratumEvent::Specify { y0, .. } => DesideratumEvent::Specify {
                y0: *y0,
                gamma: f64::INFINITY,
            },
            DesideratumEvent::Conjunction { events } => DesideratumEvent::Conjunction {
                events: events.iter().map(DesideratumEvent::fully_relaxed).collect(),
            },
        }
    }

    /// Whether `self` is a subset of `other`, for events of the same shape.
    pub fn is_subset_of(&self, other: &DesideratumEvent) -> bool {
        use DesideratumEvent::*;
        match (self, other) {
            (Maximize { gamma: a }, Maximize { gamma: b }) => a >= b,
            (Specify { y0: ya, gamma: a }, Specify { y0: yb, gamma: b }) => ya == yb && a <= b,
            (Conjunction { events: a }, Conjunction { events: b }) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.is_subset_of(y))
            }
            _ => false,
        }
    }

    /// `P(S | x)` under the product rule over leaves; `oracles[i]` scores leaf `i`.
    pub fn probability(&self, oracles: &[&dyn Oracle], x: &DesignPoint) -> Result<f64> {
        Ok(self.ln_probability(oracles, x)?.exp())
    }

    /// `ln P(S | x)`; survival tails are evaluated in log space.
    pub fn ln_probability(&self, oracles: &[&dyn Oracle], x: &DesignPoint) -> Result<f64> {
        let leaves = self.leaves();
        if leaves.len() != oracles.len() {
            return Err(Error::InvalidParameter(format!(
                "event has {} components but {} oracles were supplied",
                leaves.len(),
                oracles.len()
            )));
        }
        let mut total = 0.0;
        for (leaf, oracle) in leaves.into_iter().zip(oracles) {
            total += match leaf {
                DesideratumEvent::Maximize { gamma } => oracle.ln_survival(x, *gamma)?,
                DesideratumEvent::Specify { y0, gamma } => oracle.interval(x, *y0, *gamma)?.ln(),
                DesideratumEvent::Conjunction { .. } => unreachable!(),
            };
        }
        Ok(total)
    }
}

/// Relaxation state `S^(t)` moving from the fully relaxed event towards the
/// target event, one quantile update per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationState {
    pub t: usize,
    pub current: DesideratumEvent,
    pub target: DesideratumEvent,
    pub quantile: f64,
}

impl RelaxationState {
    /// Starts at the fully relaxed version of `target`. A target threshold of
    /// `+inf` (or half-width 0) leaves the schedule uncapped.
    pub fn new(target: DesideratumEvent, quantile: f64) -> Result<Self> {
        target.validate()?;
        if !(quantile > 0.0 && quantile <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile {quantile} outside (0, 1]"
            )));
        }
        Ok(Self {
            t: 0,
            current: target.fully_relaxed(),
            target,
            quantile,
        })
    }

    /// Moves to `S^(t+1)` from the predicted means of the latest batch,
    /// `means[i]` holding the means from the oracle of leaf `i`.
    ///
    /// Thresholds take the Q-th percentile of the means and never decrease;
    /// half-widths take the Q-th percentile of `|mean - y0|` and never
    /// increase. Both are clamped so the target stays nested inside.
    pub fn update(&self, means: &[Vec<f64>]) -> Result<Self> {
        let leaves = self.current.leaves();
        let targets = self.target.leaves();
        if means.len() != leaves.len() {
            return Err(Error::InvalidParameter(format!(
                "{} score vectors for {} event components",
                means.len(),
                leaves.len()
            )));
        }
        let mut updated = Vec::with_capacity(leaves.len());
        for ((leaf, target), scores) in leaves.into_iter().zip(targets).zip(means) {
            updated.push(match (leaf, target) {
                (DesideratumEvent::Maximize { gamma }, DesideratumEvent::Maximize { gamma: cap }) => {
                    let q = nearest_rank_percentile(scores, self.quantile)?;
                    DesideratumEvent::Maximize {
                        gamma: gamma.max(q).min(*cap),
                    }
                }
                (
                    DesideratumEvent::Specify { y0, gamma },
                    DesideratumEvent::Specify { gamma: floor, .. },
                ) => {
                    let deviations: Vec<f64> = scores.iter().map(|y| (y - y0).abs()).collect();
                    let q = nearest_rank_percentile(&deviations, self.quantile)?;
                    DesideratumEvent::Specify {
                        y0: *y0,
                        gamma: gamma.min(q).max(*floor),
                    }
                }
                _ => unreachable!("current and target share a shape"),
            });
        }
        Ok(Self {
            t: self.t + 1,
            current: rebuild(&self.current, &mut updated.into_iter()),
            target: self.target.clone(),
            quantile: self.quantile,
        })
    }
}

fn rebuild(shape: &DesideratumEvent, leaves: &mut impl Iterator<Item = DesideratumEvent>) -> DesideratumEvent {
    match shape {
        DesideratumEvent::Conjunction { events } => DesideratumEvent::Conjunction {
            events: events.iter().map(|e| rebuild(e, leaves)).collect(),
        },
        _ => leaves.next().expect("leaf count matches shape"),
    }
}

/// Serde adapter writing non-finite floats as the strings `"inf"`, `"-inf"`
/// and `"nan"`, which plain JSON numbers cannot carry.
pub mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}
