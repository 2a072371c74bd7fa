//! Mollified spectral sums, the perturbation expansion `R₁ + R₂`, the scalar
//! trigonometric identities behind it, and scaling fits.

pub mod divided;
pub mod fit;
pub mod mollifier;
pub mod remainder;
pub mod sums;
pub mod trig;

use serde::{Deserialize, Serialize};

pub use divided::{divided_difference, Differentiable};
pub use fit::{fit_exponent, FitReport, ScalingFit};
pub use mollifier::MollifierSpec;
pub use remainder::{perturbation_difference, pointwise_remainder};
pub use sums::{duhamel_identity_check, r1_indicator_lower, r1_sum, r2_sum, DuhamelRecord, R2Options, SumReport};

/// Which spectral weight a pointwise sum uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Sharp cutoff `1_{[0,λ]}`.
    Indicator,
    /// The smoothed indicator `h`.
    Mollified,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Indicator => "indicator",
            Mode::Mollified => "mollified",
        }
    }
}
