//! Conditioning by adaptive sampling (CbAS) for model-based design.
//!
//! A prior generative model encodes where a property oracle can be trusted.
//! CbAS adapts a search model towards the prior conditioned on a desired
//! property event, using importance-weighted maximum likelihood with a
//! relaxation schedule on the event threshold.
//!
//! Module map:
//!
//! - [`design`], [`event`], [`stats`]: shared vocabulary (design points,
//!   desideratum events, nearest-rank percentiles, Gaussian helpers).
//! - [`models`]: generative models with exact sampling, densities and
//!   closed-form weighted fits.
//! - [`oracle`]: Gaussian predictive oracles, ensembles, ground-truth
//!   landscapes and training protocols.
//! - [`engine`]: the CbAS iteration.
//! - [`baselines`]: DbAS, RWR, CEM-PI and feedback retraining.
//! - [`reference`]: brute-force quadrature, KL and numeric MLE used to check
//!   the rest of the crate.

pub mod baselines;
pub mod design;
pub mod engine;
pub mod error;
pub mod event;
pub mod models;
pub mod oracle;
pub mod reference;
pub mod stats;

pub use design::DesignPoint;
pub use error::{Error, Result};
pub use event::{event_membership, DesideratumEvent, RelaxationState};
pub use stats::nearest_rank_percentile;
