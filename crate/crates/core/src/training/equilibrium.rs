use serde::{Deserialize, Serialize};

/// Balance controller between discriminator and generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub tau: f64,
    pub step: u64,
}

impl Default for EquilibriumState {
    fn default() -> Self {
        Self { tau: 0.0, step: 0 }
    }
}

/// `τ ← clamp(τ + β(γ·L(X) − L(G(Z))), 0, 1)`; advances the step counter.
pub fn update_tau(
    state: EquilibriumState,
    l_x: f64,
    l_gz: f64,
    beta: f64,
    gamma: f64,
) -> EquilibriumState {
    let tau = (state.tau + beta * (gamma * l_x - l_gz)).clamp(0.0, 1.0);
    EquilibriumState {
        tau,
        step: state.step + 1,
    }
}

/// BEGAN convergence measure `L(X) + |γ·L(X) − L(G(Z))|`.
pub fn convergence_measure(l_x: f64, l_gz: f64, gamma: f64) -> f64 {
    l_x + (gamma * l_x - l_gz).abs()
}
