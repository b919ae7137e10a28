//! Measurements on completed runs and the parameter studies built on them.

pub mod characteristics;
pub mod fit;
pub mod material;
pub mod sigma;
pub mod studies;
pub mod tv;

pub use characteristics::{trace_characteristic, CharacteristicPath};
pub use fit::{loglog_fit, LogLogFit};
pub use material::material_derivative_residual;
pub use sigma::{sigma_sign_check, SigmaReport};
pub use tv::{tv_monotonicity, TvSeries};
