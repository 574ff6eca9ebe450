use serde::{Deserialize, Serialize};

/// Physical constants used by every kernel. Natural units by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Units {
    pub hbar: f64,
    pub c: f64,
    pub kb: f64,
}

impl Default for Units {
    fn default() -> Self {
        Units { hbar: 1.0, c: 1.0, kb: 1.0 }
    }
}

impl Units {
    /// Vacuum wavenumber `omega / c`.
    pub fn k0(&self, omega: f64) -> f64 {
        omega / self.c
    }
}
