//! Sparse reduced-rank regression for multi-response data with missing
//! outcomes. A low-rank initial estimate is computed from the observed
//! responses, then each rank-one layer is refined by an independent Lasso fit.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the file interfaces use.

pub mod bench;
pub mod error;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod masked;
pub mod metrics;
pub mod peer;
pub mod scalar;
pub mod simgen;
pub mod svt;

pub use error::{PeerError, Result};
pub use masked::{Mask, ObservedMatrix};
pub use peer::{fit_peer, predict, LayerEstimate, LayerLassoConfig, PeerConfig, PeerModel};
pub use scalar::Scalar;
pub use simgen::{generate, SimDataset, SimScenario};
pub use svt::{initialize, InitEstimate, SvtConfig};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type Observed = ObservedMatrix<f64>;
pub type Model = PeerModel<f64>;
pub type Dataset = SimDataset<f64>;
