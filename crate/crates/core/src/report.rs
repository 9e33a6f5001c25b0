use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// A hypothesis of the tested statement does not hold for the inputs.
    Inapplicable,
}

/// Outcome of a verification. `margin` is the slack of the pass criterion:
/// nonnegative exactly when the check passes (undefined for inapplicable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub status: Status,
    /// Some underlying computation (usually a solve) did not converge.
    pub partial: bool,
    pub margin: f64,
    pub metrics: BTreeMap<String, f64>,
    pub worst_location: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(check: &str) -> Self {
        Self {
            check: check.to_string(),
            status: Status::Inapplicable,
            partial: false,
            margin: f64::NAN,
            metrics: BTreeMap::new(),
            worst_location: None,
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub(crate) fn metric(&mut self, key: &str, value: f64) -> &mut Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    pub(crate) fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    /// Sets the margin and derives pass/fail from its sign.
    pub(crate) fn judge(&mut self, margin: f64) -> &mut Self {
        self.margin = margin;
        self.status = if margin >= 0.0 { Status::Pass } else { Status::Fail };
        self
    }

    pub(crate) fn inapplicable(&mut self, why: impl Into<String>) -> &mut Self {
        self.status = Status::Inapplicable;
        self.note(why)
    }
}
