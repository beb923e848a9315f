use serde::Serialize;

use crate::{Error, Result};

/// Physical-layer parameters of the typical link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkBudget {
    /// Transmit power P in watts.
    pub tx_power_watts: f64,
    /// Transmitter-receiver distance r_t in meters.
    pub link_distance_m: f64,
    /// Path-loss exponent α, with a 1 m reference distance.
    pub path_loss_exp: f64,
    /// Data target SIR β (linear).
    pub target_sir: f64,
    /// Control-message (RTS/CTS) target SIR β_c (linear).
    pub control_target_sir: f64,
}

impl LinkBudget {
    pub fn new(
        tx_power_watts: f64,
        link_distance_m: f64,
        path_loss_exp: f64,
        target_sir: f64,
        control_target_sir: f64,
    ) -> Result<Self> {
        let link = LinkBudget {
            tx_power_watts,
            link_distance_m,
            path_loss_exp,
            target_sir,
            control_target_sir,
        };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        positive("tx_power_watts", self.tx_power_watts)?;
        positive("link_distance_m", self.link_distance_m)?;
        positive("target_sir", self.target_sir)?;
        positive("control_target_sir", self.control_target_sir)?;
        if !(self.path_loss_exp > 2.0 && self.path_loss_exp.is_finite()) {
            return Err(Error::InvalidAlpha(self.path_loss_exp));
        }
        Ok(())
    }

    /// Received signal power without fading, `r_t^-α P`.
    pub fn received_power(&self) -> f64 {
        self.tx_power_watts * self.link_distance_m.powf(-self.path_loss_exp)
    }

    /// Copy with a different transmit power.
    pub fn with_power(&self, tx_power_watts: f64) -> Self {
        LinkBudget {
            tx_power_watts,
            ..*self
        }
    }

    pub fn with_target_sir(&self, target_sir: f64) -> Self {
        LinkBudget { target_sir, ..*self }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, v, "must be positive and finite"))
    }
}

/// Binary exponential backoff configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BackoffParams {
    /// Initial contention window W0 in slots.
    pub initial_window: u32,
    /// Maximum backoff stage m.
    pub max_stage: u32,
}

impl BackoffParams {
    pub fn new(initial_window: u32, max_stage: u32) -> Result<Self> {
        if initial_window == 0 {
            return Err(Error::invalid("initial_window", 0.0, "must be at least 1"));
        }
        if max_stage > 60 {
            return Err(Error::invalid(
                "max_stage",
                f64::from(max_stage),
                "window W0*2^m would overflow",
            ));
        }
        Ok(BackoffParams {
            initial_window,
            max_stage,
        })
    }

    /// Contention window at `stage`, clamped at the maximum stage.
    pub fn window(&self, stage: u32) -> u64 {
        u64::from(self.initial_window) << stage.min(self.max_stage)
    }
}

/// Converged MAC fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContentionState {
    pub tau: f64,
    pub busy_prob: f64,
    pub collision_prob: f64,
    /// |τ - h(τ)| at the returned τ.
    pub residual: f64,
    pub iterations: usize,
}

/// Geometry and performance of the network at one sensing threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpatialState {
    pub sense_threshold_watts: f64,
    pub sense_range_m: f64,
    pub active_density: f64,
    pub success_prob: f64,
    pub ase: f64,
    pub contention: ContentionState,
}
