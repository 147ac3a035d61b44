//! Worst-case publication-bias bounds for random-effects meta-analysis.

pub mod cj;
pub mod cli;
pub mod data;
pub mod error;
pub mod extended;
pub mod quadrature;
pub mod random_effects;
pub mod selection;
pub mod sensitivity;
pub mod sim;
pub mod stats;

pub use cj::{cj_bound, cj_bound_sweep, BoundResult, Method};
pub use data::{MetaDataset, Study};
pub use error::{Error, Result};
pub use extended::{extended_bound, ExtendedBound, McGrid, OptConfig};
pub use random_effects::{fit_ml, ReFit};
pub use selection::{Family, ModelSpec, ReContext, SelectionModel, Tail};
pub use stats::Seed;
