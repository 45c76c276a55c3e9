//! Circuit primitives of a p-block and the resistive node solve of the
//! coupling network.
//!
//! ```text
//!  V_block ─ MTJ ─┬─ R_sense ─ gnd       v_in ─ R1 ─┬─ R2 ─ V_ss
//!                 │                                 └─ R3 ─ V_dd
//!            R_filt/C_filt                          │
//!                 └──────────── (+) comparator (−) ─┘ threshold
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mtj::{self, MtjParams, MtjState};

/// Circuit constants of one p-block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PBlockConfig {
    /// D.C. bias source driving the MTJ branch (V).
    pub v_block: f64,
    /// Series sense resistor (Ω).
    pub r_sense: f64,
    /// Low-pass time constant R_filt·C_filt (s). Zero disables the filter.
    pub t_c: f64,
    /// Input-to-threshold resistor (Ω).
    pub r1: f64,
    /// Threshold-to-V_ss resistor (Ω).
    pub r2: f64,
    /// Threshold-to-V_dd resistor (Ω).
    pub r3: f64,
    /// Positive rail (V).
    pub v_dd: f64,
    /// Negative rail (V).
    pub v_ss: f64,
    /// Comparator hysteresis band width (V).
    #[serde(default)]
    pub hysteresis: f64,
}

impl Default for PBlockConfig {
    fn default() -> Self {
        let base = PBlockConfig {
            v_block: 0.33,
            r_sense: 100.0,
            t_c: 3e-6,
            r1: 1.0,
            r2: 1.0,
            r3: 1.0,
            v_dd: 1.65,
            v_ss: -1.65,
            hysteresis: 0.0,
        };
        let mid = base.sense_midpoint(&MtjParams::default());
        base.with_divider(DEFAULT_DIVIDER_GAIN, mid, 1e3)
            .expect("default divider is realizable")
    }
}

/// Default attenuation of the input divider, `g1 / (g1 + g2 + g3)`.
pub const DEFAULT_DIVIDER_GAIN: f64 = 0.010;

impl PBlockConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_sense > 0.0) {
            return Err(invalid("r_sense must be positive"));
        }
        if !(self.t_c >= 0.0) {
            return Err(invalid("t_c must be non-negative"));
        }
        if !(self.r1 > 0.0 && self.r2 > 0.0 && self.r3 > 0.0) {
            return Err(invalid("divider resistors must be positive"));
        }
        if !(self.v_dd > 0.0 && self.v_ss < 0.0) {
            return Err(invalid("rails must satisfy v_dd > 0 > v_ss"));
        }
        if !(self.hysteresis >= 0.0) {
            return Err(invalid("hysteresis must be non-negative"));
        }
        Ok(())
    }

    /// Solves r1, r2, r3 so that `threshold = gain·v_in + offset` with the
    /// three divider conductances summing to `1/r_parallel`.
    pub fn with_divider(mut self, gain: f64, offset: f64, r_parallel: f64) -> Result<Self> {
        if !(gain > 0.0 && gain < 1.0) || !(r_parallel > 0.0) {
            return Err(invalid("divider gain must lie in (0, 1)"));
        }
        let g_total = 1.0 / r_parallel;
        let g1 = gain * g_total;
        let rest = g_total - g1;
        // g3·v_dd + g2·v_ss = offset·g_total, g2 + g3 = rest
        let g3 = (offset * g_total - rest * self.v_ss) / (self.v_dd - self.v_ss);
        let g2 = rest - g3;
        if !(g2 > 0.0 && g3 > 0.0) {
            return Err(invalid(format!(
                "offset {offset} V is not reachable with gain {gain}"
            )));
        }
        self.r1 = 1.0 / g1;
        self.r2 = 1.0 / g2;
        self.r3 = 1.0 / g3;
        Ok(self)
    }

    /// Sense voltage in each MTJ state.
    pub fn sense_levels(&self, mtj: &MtjParams) -> (f64, f64) {
        let level = |s| {
            let r = mtj::resistance(s, mtj);
            sense_voltage(self.v_block / (self.r_sense + r), self.r_sense)
        };
        (level(MtjState::P), level(MtjState::AP))
    }

    pub fn sense_midpoint(&self, mtj: &MtjParams) -> f64 {
        let (p, ap) = self.sense_levels(mtj);
        0.5 * (p + ap)
    }

    /// `(gain, offset)` of the affine input-to-threshold map.
    pub fn divider(&self) -> (f64, f64) {
        let (g1, g2, g3) = (1.0 / self.r1, 1.0 / self.r2, 1.0 / self.r3);
        let g = g1 + g2 + g3;
        (g1 / g, (g2 * self.v_ss + g3 * self.v_dd) / g)
    }

    /// Input voltage whose threshold equals `threshold`.
    pub fn input_for_threshold(&self, threshold: f64) -> f64 {
        let (a, b) = self.divider();
        (threshold - b) / a
    }

    /// Complementary rail of `v_out`.
    pub fn complement(&self, v_out: f64) -> f64 {
        if v_out > 0.5 * (self.v_dd + self.v_ss) {
            self.v_ss
        } else {
            self.v_dd
        }
    }
}

/// A resistive source feeding a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceTap {
    pub voltage: f64,
    /// Conductance (S), strictly positive.
    pub conductance: f64,
}

/// Current through the V_block - MTJ - R_sense series branch.
pub fn branch_current(v_block: f64, r_sense: f64, r_mtj: f64) -> Result<f64> {
    let total = r_sense + r_mtj;
    if !(total > 0.0) {
        return Err(invalid(format!(
            "branch resistance must be positive, got {total}"
        )));
    }
    Ok(v_block / total)
}

/// V_mtj, the voltage across R_sense.
pub fn sense_voltage(current: f64, r_sense: f64) -> f64 {
    current * r_sense
}

/// Exact one-pole low-pass update over `dt`. `t_c == 0` passes `v_in` through.
#[inline]
pub fn rc_filter_step(v_in: f64, v_prev: f64, dt: f64, t_c: f64) -> f64 {
    if t_c == 0.0 {
        return v_in;
    }
    v_prev + (v_in - v_prev) * filter_alpha(dt, t_c)
}

/// Blend factor `1 - exp(-dt/t_c)` of [`rc_filter_step`].
pub fn filter_alpha(dt: f64, t_c: f64) -> f64 {
    if t_c == 0.0 {
        1.0
    } else {
        -(-dt / t_c).exp_m1()
    }
}

/// Comparator threshold produced by the input divider.
pub fn threshold_from_input(v_in: f64, cfg: &PBlockConfig) -> f64 {
    let (g1, g2, g3) = (1.0 / cfg.r1, 1.0 / cfg.r2, 1.0 / cfg.r3);
    (g1 * v_in + g2 * cfg.v_ss + g3 * cfg.v_dd) / (g1 + g2 + g3)
}

/// Rail-valued comparator with optional hysteresis. Exact ties go to `v_ss`.
#[inline]
pub fn comparator(v_filt: f64, v_thresh: f64, prev_out: f64, cfg: &PBlockConfig) -> f64 {
    let margin = 0.5 * cfg.hysteresis;
    if margin == 0.0 {
        return if v_filt > v_thresh {
            cfg.v_dd
        } else {
            cfg.v_ss
        };
    }
    if v_filt > v_thresh + margin {
        cfg.v_dd
    } else if v_filt < v_thresh - margin {
        cfg.v_ss
    } else {
        prev_out
    }
}

/// Voltage of a node fed by resistive sources (Millman's theorem).
pub fn millman_node(taps: &[SourceTap]) -> Result<f64> {
    if taps.is_empty() {
        return Err(invalid("millman node needs at least one tap"));
    }
    let (num, den) = taps.iter().fold((0.0, 0.0), |(n, d), t| {
        (n + t.conductance * t.voltage, d + t.conductance)
    });
    // Keep rounding from pushing the mean outside the source range.
    let lo = taps.iter().map(|t| t.voltage).fold(f64::INFINITY, f64::min);
    let hi = taps
        .iter()
        .map(|t| t.voltage)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((num / den).clamp(lo, hi))
}
