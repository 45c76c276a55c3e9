//! Run configuration loaded from TOML.
//!
//! The shipped `config/default-config.toml` is embedded in the binary and is
//! the source of every default: a user file is merged over it key by key
//! before parsing, so it only needs the keys it changes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::analog::PBlockConfig;
use crate::behavioral::IsingSpec;
use crate::engine::{BlockSetup, SimConfig};
use crate::error::{PslError, Result};
use crate::mtj::MtjParams;
use crate::synthesis::{self, CouplingNetwork, LegalSet, SynthesisOptions};

pub const DEFAULT_CONFIG: &str = include_str!("../../../config/default-config.toml");

/// Names of the gate terminals, in `[ABC]` order.
pub const TERMINALS: [&str; 3] = ["A", "B", "C"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PBlockSection {
    pub v_block: f64,
    pub r_sense: f64,
    pub t_c: f64,
    pub v_dd: f64,
    pub v_ss: f64,
    pub hysteresis: f64,
    pub divider_gain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divider_offset: Option<f64>,
    pub divider_r_parallel: f64,
}

impl PBlockSection {
    pub fn build(&self, mtj: &MtjParams) -> Result<PBlockConfig> {
        let base = PBlockConfig {
            v_block: self.v_block,
            r_sense: self.r_sense,
            t_c: self.t_c,
            r1: 1.0,
            r2: 1.0,
            r3: 1.0,
            v_dd: self.v_dd,
            v_ss: self.v_ss,
            hysteresis: self.hysteresis,
        };
        let offset = self
            .divider_offset
            .unwrap_or_else(|| base.sense_midpoint(mtj));
        let cfg = base.with_divider(self.divider_gain, offset, self.divider_r_parallel)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Keys replacing the shared `[pblock]` and `[mtj]` values for one block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pblock: Option<Table>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mtj: Option<Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legal: Option<Vec<String>>,
    pub r_unit: f64,
    pub clamp_ratio: f64,
    pub pad_to: f64,
    pub duration: f64,
    pub warmup: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_period: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehavioralSection {
    pub beta: f64,
    pub i0: f64,
    pub sweeps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub beta_min: f64,
    pub beta_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSection {
    pub t_c: Vec<f64>,
    pub points: usize,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSection {
    pub t_c: Vec<f64>,
    pub bins: usize,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    pub captures: usize,
    pub t_c: f64,
    pub t_step: f64,
    pub window: f64,
    pub sample_period: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampSection {
    pub duration: f64,
    pub window: f64,
    pub sample_period: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizeSection {
    pub captures: usize,
    pub t_flip: f64,
    pub post_duration: f64,
    pub sample_period: f64,
    pub sliding_window: f64,
    pub windows: Vec<f64>,
}

/// Thresholds of the qualitative checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Margins {
    pub saturation_high: f64,
    pub saturation_low: f64,
    pub transfer_r2: f64,
    pub steepness_ratio: f64,
    pub rail_mass_unfiltered: f64,
    pub rail_mass_filtered: f64,
    pub latency_p95: f64,
    pub ramp_high: f64,
    pub ramp_low: f64,
    pub suppression: f64,
    pub fluctuation_low: f64,
    pub fluctuation_high: f64,
    pub backward_mode: f64,
    pub illegal_pair_response: f64,
    pub legal_margin: f64,
    pub onset_threshold: f64,
    pub onset_deadline: f64,
    pub stabilization_window: f64,
    pub stabilization_tv: f64,
    pub device_tv: f64,
    pub behavioral_tv: f64,
    pub clamp_dominance: f64,
    pub dt_halving: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub sim: SimSection,
    pub mtj: MtjParams,
    pub pblock: PBlockSection,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub blocks: BTreeMap<String, BlockOverride>,
    pub gate: GateSection,
    pub behavioral: BehavioralSection,
    pub calibration: CalibrationSection,
    pub transfer: TransferSection,
    pub vmtj_hist: HistogramSection,
    pub step: StepSection,
    pub ramp: RampSection,
    pub stabilize: StabilizeSection,
    pub margins: Margins,
}

fn cfg_err(msg: impl Into<String>) -> PslError {
    PslError::Config(msg.into())
}

/// Recursively overlays `top` onto `base`; tables merge, everything else
/// replaces.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn overlay<T: Serialize + for<'de> Deserialize<'de>>(
    base: &T,
    top: &Option<Table>,
    what: &str,
) -> Result<T> {
    let mut table = Table::try_from(base).map_err(|e| cfg_err(e.to_string()))?;
    if let Some(top) = top {
        merge(&mut table, top.clone());
    }
    Value::Table(table)
        .try_into()
        .map_err(|e| cfg_err(format!("{what}: {e}")))
}

impl Default for Config {
    fn default() -> Self {
        Config::from_toml_str("").expect("shipped default configuration is valid")
    }
}

impl Config {
    /// Parses a (possibly partial) configuration merged over the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut base: Table = DEFAULT_CONFIG
            .parse()
            .map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
        let user: Table = text
            .parse()
            .map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
        merge(&mut base, user);
        let cfg: Config = Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err(e.to_string()))
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| r.map_err(|e| cfg_err(e.to_string()));
        if !(self.sim.dt > 0.0 && self.sim.dt.is_finite()) {
            return Err(cfg_err("sim.dt must be positive"));
        }
        wrap(self.mtj.validate())?;
        for key in self.blocks.keys() {
            if !TERMINALS.contains(&key.as_str()) {
                return Err(cfg_err(format!(
                    "unknown block '{key}', expected A, B or C"
                )));
            }
        }
        let blocks = self.block_setups()?;
        for b in &blocks {
            wrap(b.validate(self.sim.dt))?;
        }
        let spec = self.ising_spec()?;
        let legal = self.legal_set()?;
        if legal.n != spec.n() || spec.n() != TERMINALS.len() {
            return Err(cfg_err("the gate must have exactly three terminals"));
        }
        self.network()?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(cfg_err(format!("{name} must be positive")))
            }
        };
        positive("gate.duration", self.gate.duration)?;
        positive("gate.sample_period", self.gate_sample_period()?)?;
        if !(self.gate.warmup >= 0.0 && self.gate.warmup < self.gate.duration) {
            return Err(cfg_err("gate.warmup must lie in [0, gate.duration)"));
        }
        positive("behavioral.i0", self.behavioral.i0)?;
        if !(self.behavioral.beta >= 0.0) || self.behavioral.sweeps == 0 {
            return Err(cfg_err(
                "behavioral.beta must be non-negative and sweeps at least 1",
            ));
        }
        let c = &self.calibration;
        if !(c.beta_min >= 0.0 && c.beta_max > c.beta_min) || c.points < 2 {
            return Err(cfg_err(
                "calibration needs 0 <= beta_min < beta_max and points >= 2",
            ));
        }
        if self.transfer.t_c.is_empty() || self.transfer.points < 2 {
            return Err(cfg_err("transfer needs at least one t_c and two points"));
        }
        positive("transfer.duration", self.transfer.duration)?;
        if self.vmtj_hist.t_c.is_empty() || self.vmtj_hist.bins < 3 {
            return Err(cfg_err("vmtj_hist needs at least one t_c and three bins"));
        }
        positive("vmtj_hist.duration", self.vmtj_hist.duration)?;
        for &t_c in self
            .transfer
            .t_c
            .iter()
            .chain(&self.vmtj_hist.t_c)
            .chain([&self.step.t_c])
        {
            for b in &blocks {
                let s = BlockSetup {
                    cfg: PBlockConfig { t_c, ..b.cfg },
                    ..*b
                };
                wrap(s.validate(self.sim.dt))?;
            }
        }
        if self.step.captures == 0 {
            return Err(cfg_err("step.captures must be at least 1"));
        }
        positive("step.t_step", self.step.t_step)?;
        positive("step.window", self.step.window)?;
        positive("step.sample_period", self.step.sample_period)?;
        positive("ramp.duration", self.ramp.duration)?;
        positive("ramp.sample_period", self.ramp.sample_period)?;
        if !(self.ramp.window > 0.0 && self.ramp.window < 0.5 * self.ramp.duration) {
            return Err(cfg_err(
                "ramp.window must be positive and below half the ramp",
            ));
        }
        let s = &self.stabilize;
        if s.captures == 0 {
            return Err(cfg_err("stabilize.captures must be at least 1"));
        }
        positive("stabilize.t_flip", s.t_flip)?;
        positive("stabilize.post_duration", s.post_duration)?;
        positive("stabilize.sample_period", s.sample_period)?;
        positive("stabilize.sliding_window", s.sliding_window)?;
        if s.windows
            .iter()
            .any(|&w| !(w > 0.0 && w <= s.post_duration))
        {
            return Err(cfg_err("stabilize.windows must lie in (0, post_duration]"));
        }
        Ok(())
    }

    /// Circuit constants of blocks A, B, C with overrides applied.
    pub fn block_setups(&self) -> Result<Vec<BlockSetup>> {
        TERMINALS
            .iter()
            .map(|name| {
                let ov = self.blocks.get(*name).cloned().unwrap_or_default();
                let mtj: MtjParams = overlay(&self.mtj, &ov.mtj, &format!("blocks.{name}.mtj"))?;
                mtj.validate()
                    .map_err(|e| cfg_err(format!("blocks.{name}.mtj: {e}")))?;
                let section: PBlockSection =
                    overlay(&self.pblock, &ov.pblock, &format!("blocks.{name}.pblock"))?;
                let cfg = section
                    .build(&mtj)
                    .map_err(|e| cfg_err(format!("blocks.{name}.pblock: {e}")))?;
                Ok(BlockSetup { cfg, mtj })
            })
            .collect()
    }

    /// The shared block used by single p-block experiments.
    pub fn block_setup(&self) -> Result<BlockSetup> {
        let cfg = self
            .pblock
            .build(&self.mtj)
            .map_err(|e| cfg_err(format!("pblock: {e}")))?;
        Ok(BlockSetup { cfg, mtj: self.mtj })
    }

    pub fn ising_spec(&self) -> Result<IsingSpec> {
        let mut spec = match self.gate.name.as_str() {
            "and" => synthesis::and_gate_spec(),
            "custom" => {
                let (Some(j), Some(h)) = (&self.gate.j, &self.gate.h) else {
                    return Err(cfg_err("a custom gate needs gate.j and gate.h"));
                };
                IsingSpec::new(j.clone(), h.clone()).map_err(|e| cfg_err(format!("gate: {e}")))?
            }
            other => return Err(cfg_err(format!("unknown gate '{other}'"))),
        };
        spec.beta = self.behavioral.beta;
        spec.i0 = self.behavioral.i0;
        Ok(spec)
    }

    pub fn legal_set(&self) -> Result<LegalSet> {
        match (self.gate.name.as_str(), &self.gate.legal) {
            ("and", None) => Ok(LegalSet::and_gate()),
            (_, Some(codes)) => {
                let n = codes.first().map_or(0, |c| c.len());
                let codes = codes
                    .iter()
                    .map(|c| {
                        if c.len() != n || !c.chars().all(|ch| ch == '0' || ch == '1') {
                            return Err(cfg_err(format!("gate.legal: bad code '{c}'")));
                        }
                        Ok(usize::from_str_radix(c, 2).expect("binary digits"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LegalSet { n, codes })
            }
            _ => Err(cfg_err("a custom gate needs gate.legal")),
        }
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            clamp_ratio: self.gate.clamp_ratio,
            pad_to: self.gate.pad_to,
        }
    }

    /// Coupling network of the gate, synthesized against block A's rails.
    pub fn network(&self) -> Result<CouplingNetwork> {
        let blocks = self.block_setups()?;
        synthesis::ising_to_network(
            &self.ising_spec()?,
            self.gate.r_unit,
            &blocks[0].cfg,
            &self.synthesis_options(),
        )
        .map_err(|e| cfg_err(format!("gate: {e}")))
    }

    /// Gate histogram sampling period: configured, or 5x the longest mean
    /// dwell of any block.
    pub fn gate_sample_period(&self) -> Result<f64> {
        if let Some(p) = self.gate.sample_period {
            return Ok(p);
        }
        let mut longest: f64 = 0.0;
        for b in self.block_setups()? {
            let (p, ap) = b.dwell_times()?;
            longest = longest.max(p).max(ap);
        }
        if !longest.is_finite() {
            return Err(cfg_err(
                "gate.sample_period must be set when an MTJ never switches",
            ));
        }
        Ok(5.0 * longest)
    }

    pub fn gate_sim(&self) -> Result<SimConfig> {
        Ok(SimConfig {
            dt: self.sim.dt,
            duration: self.gate.duration,
            sample_period: self.gate_sample_period()?,
            seed: self.sim.seed,
        })
    }

    /// Fills the optional experiment keys with the values actually used. The
    /// divider offset stays derived so per-block MTJ overrides keep their own
    /// midpoints.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        c.gate.sample_period = Some(self.gate_sample_period()?);
        let (vmin, vmax) = self.transfer_range()?;
        c.transfer.v_min = Some(vmin);
        c.transfer.v_max = Some(vmax);
        let (v0, v1) = self.step_levels()?;
        c.step.v0 = Some(v0);
        c.step.v1 = Some(v1);
        let (r0, r1) = self.ramp_levels()?;
        c.ramp.v0 = Some(r0);
        c.ramp.v1 = Some(r1);
        Ok(c)
    }

    pub fn transfer_range(&self) -> Result<(f64, f64)> {
        let grid = crate::experiments::default_input_grid(&self.block_setup()?, 2);
        Ok((
            self.transfer.v_min.unwrap_or(grid[0]),
            self.transfer.v_max.unwrap_or(grid[1]),
        ))
    }

    pub fn transfer_grid(&self) -> Result<Vec<f64>> {
        let (lo, hi) = self.transfer_range()?;
        let n = self.transfer.points;
        Ok((0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect())
    }

    /// Inputs whose thresholds lie half a swing beyond the sense levels,
    /// ordered (low-output side, high-output side).
    fn saturating_inputs(&self, setup: &BlockSetup) -> (f64, f64) {
        let (vp, vap) = setup.cfg.sense_levels(&setup.mtj);
        let swing = vp - vap;
        (
            setup.cfg.input_for_threshold(vp + 0.5 * swing),
            setup.cfg.input_for_threshold(vap - 0.5 * swing),
        )
    }

    pub fn step_levels(&self) -> Result<(f64, f64)> {
        let setup = self.step_setup()?;
        let (zero, one) = self.saturating_inputs(&setup);
        Ok((self.step.v0.unwrap_or(zero), self.step.v1.unwrap_or(one)))
    }

    pub fn step_setup(&self) -> Result<BlockSetup> {
        let s = self.block_setup()?;
        Ok(BlockSetup {
            cfg: PBlockConfig {
                t_c: self.step.t_c,
                ..s.cfg
            },
            ..s
        })
    }

    /// Ramp endpoints: from logic-1 saturation to logic-0 saturation of
    /// every block.
    pub fn ramp_levels(&self) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for b in self.block_setups()? {
            let (zero, one) = self.saturating_inputs(&b);
            lo = lo.min(one);
            hi = hi.max(zero);
        }
        Ok((self.ramp.v0.unwrap_or(lo), self.ramp.v1.unwrap_or(hi)))
    }
}
