use serde::{Deserialize, Serialize};

use super::SimError;

/// Per-material constants. A material is plastic iff `yield_stress0 > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub mu: f64,
    pub lambda: f64,
    pub rho: f64,
    /// Initial von Mises yield stress; 0 disables plasticity.
    pub yield_stress0: f64,
    /// Yield-stress loss per unit plastic strain.
    pub soften_gamma: f64,
    pub eps_c: f64,
    pub eps_s: f64,
    pub m_exp: u32,
    /// Fraction of the shear modulus a damaged particle keeps; 0 leaves
    /// pressure only.
    #[serde(default)]
    pub damaged_shear: f64,
}

impl MaterialParams {
    /// Lamé parameters from Young's modulus and Poisson ratio.
    pub fn from_young(e: f64, nu: f64, rho: f64) -> Self {
        Self {
            mu: e / (2.0 * (1.0 + nu)),
            lambda: e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
            rho,
            yield_stress0: 0.0,
            soften_gamma: 0.0,
            eps_c: 0.025,
            eps_s: 0.01,
            m_exp: 1,
            damaged_shear: 0.05,
        }
    }

    /// Dense elastic inner core.
    pub fn core() -> Self {
        Self::from_young(5000.0, 0.2, 4.0)
    }

    /// Light outer skin with softening von Mises plasticity.
    pub fn skin() -> Self {
        Self { rho: 1.0, yield_stress0: 150.0, soften_gamma: 1500.0, ..Self::core() }
    }

    pub fn is_plastic(&self) -> bool {
        self.yield_stress0 > 0.0
    }

    /// Volume ratio at or below which a particle fails in compression.
    pub fn compression_limit(&self) -> f64 {
        (1.0 - self.eps_c).powi(self.m_exp as i32)
    }

    /// Volume ratio at or above which a particle fails in tension.
    pub fn stretch_limit(&self) -> f64 {
        (1.0 + self.eps_s).powi(self.m_exp as i32)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.mu > 0.0
            && self.lambda >= 0.0
            && self.rho > 0.0
            && self.yield_stress0 >= 0.0
            && self.soften_gamma >= 0.0
            && self.eps_c > 0.0
            && self.eps_c < 1.0
            && self.eps_s > 0.0
            && self.m_exp >= 1
            && (0.0..=1.0).contains(&self.damaged_shear);
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(format!("material parameters out of range: {self:?}")))
        }
    }
}

/// Outcome of the per-particle damage rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DamageUpdate {
    pub yield_stress: f64,
    pub damaged: bool,
}

/// Volumetric and softening damage. Already damaged particles stay damaged.
pub fn damage_rule(mat: &MaterialParams, j: f64, yield_stress: f64, delta_eps_p: f64, damaged: bool) -> DamageUpdate {
    let mut ys = yield_stress;
    let mut d = damaged || j <= mat.compression_limit() || j >= mat.stretch_limit();
    if mat.is_plastic() {
        ys -= mat.soften_gamma * delta_eps_p;
        d |= ys <= 0.0;
    }
    DamageUpdate { yield_stress: ys, damaged: d }
}
