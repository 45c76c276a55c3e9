//! Thermally stable in-plane MTJ as a two-state telegraph process.
//!
//! The bias field lowers the AP barrier (AP -> P switching) and the spin
//! transfer torque of the branch current lowers the P barrier (P -> AP). In P
//! the junction draws more current, which closes the negative feedback loop
//! that keeps the device oscillating.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MtjState {
    /// Parallel, low resistance.
    P,
    /// Anti-parallel, high resistance.
    AP,
}

impl MtjState {
    pub fn flipped(self) -> Self {
        match self {
            MtjState::P => MtjState::AP,
            MtjState::AP => MtjState::P,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MtjState::P => "P",
            MtjState::AP => "AP",
        }
    }
}

/// Device parameters of one junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtjParams {
    /// Parallel-state resistance (Ω).
    pub r_p: f64,
    /// Anti-parallel-state resistance (Ω).
    pub r_ap: f64,
    /// Zero-bias barrier of the P state (units of kT).
    pub delta0_p: f64,
    /// Zero-bias barrier of the AP state (units of kT).
    pub delta0_ap: f64,
    /// Attempt time (s).
    pub tau0: f64,
    /// Current that fully collapses the P barrier (A).
    pub i_c: f64,
    /// Field that fully collapses the AP barrier (T).
    pub h_k: f64,
    /// Quasi-static coercivity (T). Informational only.
    pub h_coercive: f64,
    /// Static bias field applied by the magnet fixture (T).
    pub bias_field: f64,
}

impl Default for MtjParams {
    /// TMR 100 %, tau0 = 1 ns, barriers of 40 kT tuned so that with the
    /// default p-block bias (0.3 mA in P) both dwell times are 1 μs.
    fn default() -> Self {
        MtjParams {
            r_p: 1000.0,
            r_ap: 2000.0,
            delta0_p: 40.0,
            delta0_ap: 40.0,
            tau0: 1e-9,
            i_c: 3.626_227_262_963_049e-4,
            h_k: 0.012,
            h_coercive: 0.010,
            bias_field: 9.927_673_416_305_36e-3,
        }
    }
}

impl MtjParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_p > 0.0 && self.r_ap > self.r_p) {
            return Err(invalid(format!(
                "mtj resistances must satisfy r_ap > r_p > 0 (r_p={}, r_ap={})",
                self.r_p, self.r_ap
            )));
        }
        if !(self.delta0_p > 0.0 && self.delta0_ap > 0.0) {
            return Err(invalid("mtj zero-bias barriers must be positive"));
        }
        if !(self.tau0 > 0.0 && self.i_c > 0.0 && self.h_k > 0.0) {
            return Err(invalid("mtj tau0, i_c and h_k must be positive"));
        }
        if !(self.bias_field >= 0.0 && self.h_coercive >= 0.0) {
            return Err(invalid("mtj fields must be non-negative"));
        }
        Ok(())
    }

    /// Returns a copy with `i_c` and `bias_field` solved so that the mean
    /// dwell is `dwell_p` in P (while carrying `current_p`) and `dwell_ap`
    /// in AP.
    pub fn tuned(mut self, current_p: f64, dwell_p: f64, dwell_ap: f64) -> Result<Self> {
        let target_p = (dwell_p / self.tau0).ln();
        let target_ap = (dwell_ap / self.tau0).ln();
        if !(target_p > 0.0 && target_p < self.delta0_p)
            || !(target_ap > 0.0 && target_ap < self.delta0_ap)
        {
            return Err(invalid(
                "requested dwell times are outside the tunable range",
            ));
        }
        if current_p <= 0.0 {
            return Err(invalid("tuning current must be positive"));
        }
        self.i_c = current_p / (1.0 - target_p / self.delta0_p);
        self.bias_field = self.h_k * (1.0 - target_ap / self.delta0_ap);
        Ok(self)
    }
}

pub fn resistance(state: MtjState, params: &MtjParams) -> f64 {
    match state {
        MtjState::P => params.r_p,
        MtjState::AP => params.r_ap,
    }
}

/// Barrier (kT) against leaving `state`, lowered linearly by the STT current
/// in P and by the field in AP, floored at zero.
pub fn effective_barrier(state: MtjState, current: f64, field: f64, params: &MtjParams) -> f64 {
    match state {
        MtjState::P => params.delta0_p * (1.0 - current.abs() / params.i_c).max(0.0),
        MtjState::AP => params.delta0_ap * (1.0 - field.abs() / params.h_k).max(0.0),
    }
}

/// Néel-Arrhenius mean dwell time.
pub fn mean_dwell(barrier: f64, tau0: f64) -> f64 {
    tau0 * barrier.max(0.0).exp()
}

/// Probability of leaving the current state within `dt`.
pub fn flip_probability(dt: f64, tau: f64) -> f64 {
    -(-dt / tau).exp_m1()
}

/// Advances the two-state chain by `dt`. Consumes exactly one uniform draw.
pub fn step<R: Rng + ?Sized>(state: MtjState, dt: f64, tau: f64, rng: &mut R) -> MtjState {
    step_with_probability(state, flip_probability(dt, tau), rng)
}

/// [`step`] with a precomputed flip probability, for hot loops where the
/// dwell time of each state is fixed.
#[inline]
pub fn step_with_probability<R: Rng + ?Sized>(
    state: MtjState,
    p_flip: f64,
    rng: &mut R,
) -> MtjState {
    let u: f64 = rng.random();
    if u < p_flip {
        state.flipped()
    } else {
        state
    }
}
