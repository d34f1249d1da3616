use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the design space: a real vector or a sequence over a finite
/// alphabet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignPoint {
    Continuous(Vec<f64>),
    Sequence(Vec<usize>),
}

impl DesignPoint {
    pub fn scalar(x: f64) -> Self {
        DesignPoint::Continuous(vec![x])
    }

    pub fn len(&self) -> usize {
        match self {
            DesignPoint::Continuous(v) => v.len(),
            DesignPoint::Sequence(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_continuous(&self) -> Result<&[f64]> {
        match self {
            DesignPoint::Continuous(v) => Ok(v),
            DesignPoint::Sequence(_) => Err(Error::InvalidDesign(
                "expected a continuous point, got a sequence".into(),
            )),
        }
    }

    pub fn as_sequence(&self) -> Result<&[usize]> {
        match self {
            DesignPoint::Sequence(s) => Ok(s),
            DesignPoint::Continuous(_) => Err(Error::InvalidDesign(
                "expected a sequence, got a continuous point".into(),
            )),
        }
    }

    /// Checks the type invariants: finite coordinates, or symbols below
    /// `alphabet` when one is given.
    pub fn validate(&self, alphabet: Option<usize>) -> Result<()> {
        match self {
            DesignPoint::Continuous(v) => {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::InvalidDesign(format!(
                        "non-finite coordinate at index {i}"
                    )));
                }
            }
            DesignPoint::Sequence(s) => {
                if let Some(a) = alphabet {
                    if let Some(i) = s.iter().position(|&v| v >= a) {
                        return Err(Error::InvalidDesign(format!(
                            "symbol {} at position {i} outside alphabet of size {a}",
                            s[i]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
