//! Models of literature obsolescence built from cited-reference ages.
//!
//! Ages are fitted with a Poisson model and with the negative binomial that
//! arises when the Poisson rate is gamma-distributed across journals. The
//! fitted negative binomial then yields survival and mortality (hazard)
//! rates by age, and VaR/TVaR percentiles of the age distribution.
//!
//! ```
//! use obsolib::{tails, NegBinModel};
//!
//! let model = NegBinModel::new(1.71, 0.18).unwrap();
//! let r20 = tails::survival(&model, 20).unwrap();
//! assert!((r20 - 0.107).abs() < 1e-3);
//! assert_eq!(tails::var_p(&model, 0.01).unwrap(), 36);
//! ```

// Frozen reference values and tabulated coefficients keep their full digits.
#![allow(clippy::excessive_precision)]

pub mod dist;
pub mod error;
pub mod fit;
pub mod ingest;
pub mod quadrature;
pub mod report;
pub mod simulate;
pub mod specfun;
pub mod tails;
pub mod verify;

pub use dist::{CountModel, GammaMixing, Moments, NegBinModel, PoissonModel};
pub use error::{Error, Result};
pub use fit::{FitReport, ModelFit, NegBinFit, Preferred};
pub use ingest::{AgeSample, IngestOptions, InputFormat, ParsedAges, StatsReport, Strictness};
pub use report::{RenderFormat, Sections, StudyOptions, StudyReport};
pub use specfun::ConvergenceSpec;
pub use tails::{RiskReport, TailReport, TvarEstimate};
