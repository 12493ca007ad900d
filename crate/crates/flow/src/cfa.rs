//! Context-focused cross-attention: inference-time, mask-guided blending of
//! cross-attention outputs computed under a base prompt and two
//! region-specific prompts.
//!
//! The blend `r = r_base + a_o M_o (r_over - r_base) + a_u M_u (r_under - r_base)`
//! is evaluated as `(1 - w_o - w_u) r_base + w_o r_over + w_u r_under` with
//! `w = a * M`, which is the same expression but returns `r_base` or
//! `r_over` bit-for-bit at the degenerate weights.

use serde::{Deserialize, Serialize};

use crate::FlowError;
use hdrforge_core::mask::TokenMasks;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfaConfig {
    pub enabled: bool,
    pub alpha_over: f64,
    pub alpha_under: f64,
}

impl Default for CfaConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            alpha_over: 1.0,
            alpha_under: 1.0,
        }
    }
}

impl CfaConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            alpha_over: 0.0,
            alpha_under: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        for (name, a) in [("alpha_over", self.alpha_over), ("alpha_under", self.alpha_under)] {
            if !(a.is_finite() && a >= 0.0) {
                return Err(FlowError::Config(format!("{name} must be finite and >= 0, got {a}")));
            }
        }
        Ok(())
    }

    /// Per-token blend weights `(alpha_over * M_over, alpha_under * M_under)`,
    /// padded with zeros for `extra` trailing tokens (reference tokens).
    pub fn token_weights(&self, masks: &TokenMasks, extra: usize) -> (Vec<f64>, Vec<f64>) {
        let pad = std::iter::repeat(0.0).take(extra);
        let wo = masks
            .over
            .iter()
            .map(|&m| self.alpha_over * f64::from(m))
            .chain(pad.clone())
            .collect();
        let wu = masks
            .under
            .iter()
            .map(|&m| self.alpha_under * f64::from(m))
            .chain(pad)
            .collect();
        (wo, wu)
    }
}

/// Which prompt feeds the base path at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfaBase {
    /// The caption's global description.
    #[default]
    Global,
    /// The `<empty>` token.
    Unconditional,
}

impl std::str::FromStr for CfaBase {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global" => Ok(CfaBase::Global),
            "unconditional" => Ok(CfaBase::Unconditional),
            _ => Err(FlowError::Config(format!(
                "unknown CFA base '{s}'; expected global or unconditional"
            ))),
        }
    }
}

/// The blend for a single scalar, in the routing form.
pub fn cfa_scalar(
    r_base: f64,
    r_over: f64,
    r_under: f64,
    m_over: f64,
    m_under: f64,
    alpha_over: f64,
    alpha_under: f64,
) -> f64 {
    let (wo, wu) = (alpha_over * m_over, alpha_under * m_under);
    (1.0 - wo - wu) * r_base + wo * r_over + wu * r_under
}
