//! Fixed-timestep simulation of single p-blocks and coupled p-circuits.
//!
//! Each MTJ owns the random stream `(seed, block index)`. In a p-circuit the
//! comparators are re-evaluated every step one at a time, in an order drawn
//! from a separate scheduler stream; each comparator sees the outputs already
//! updated in the same step.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analog::{self, PBlockConfig};
use crate::error::{invalid, Result};
use crate::mtj::{self, MtjParams, MtjState};
use crate::rng::{self, SimRng, SCHEDULER_STREAM};
use crate::synthesis::{CouplingNetwork, TapSource};

/// Minimum ratio between every dwell time / filter constant and `dt`.
pub const TIMESTEP_MARGIN: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Timestep (s).
    pub dt: f64,
    /// Simulated time (s).
    pub duration: f64,
    /// Trace decimation period (s).
    pub sample_period: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-9,
            duration: 1e-3,
            sample_period: 5e-6,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= self.sample_period && self.sample_period <= self.duration)
        {
            return Err(invalid(format!(
                "need 0 < dt <= sample_period <= duration (dt={}, sample_period={}, duration={})",
                self.dt, self.sample_period, self.duration
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn steps_per_sample(&self) -> u64 {
        ((self.sample_period / self.dt).round() as u64).max(1)
    }
}

/// Input voltage versus time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Waveform {
    Constant(f64),
    Step { v0: f64, v1: f64, t_step: f64 },
    Ramp { v0: f64, v1: f64, t0: f64, t1: f64 },
}

impl Waveform {
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Waveform::Constant(v) => v,
            Waveform::Step { v0, v1, t_step } => {
                if t < t_step {
                    v0
                } else {
                    v1
                }
            }
            Waveform::Ramp { v0, v1, t0, t1 } => {
                if t <= t0 {
                    v0
                } else if t >= t1 {
                    v1
                } else {
                    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                }
            }
        }
    }
}

/// Drive state of a clamp terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClampLevel {
    /// Driven to V_dd, pins the p-bit to logic '0'.
    Drive0,
    /// Driven to V_ss, pins the p-bit to logic '1'.
    Drive1,
    Float,
}

impl ClampLevel {
    pub fn symbol(self) -> &'static str {
        match self {
            ClampLevel::Drive0 => "0",
            ClampLevel::Drive1 => "1",
            ClampLevel::Float => "n",
        }
    }

    pub fn from_clamp(c: crate::behavioral::Clamp) -> Self {
        use crate::behavioral::Clamp;
        match c {
            Clamp::Free => ClampLevel::Float,
            Clamp::Clamp0 => ClampLevel::Drive0,
            Clamp::Clamp1 => ClampLevel::Drive1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampEvent {
    pub time: f64,
    pub terminal: usize,
    pub level: ClampLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampSchedule {
    pub initial: Vec<ClampLevel>,
    pub events: Vec<ClampEvent>,
}

impl ClampSchedule {
    pub fn constant(levels: Vec<ClampLevel>) -> Self {
        ClampSchedule {
            initial: levels,
            events: Vec::new(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.initial.len() != n {
            return Err(invalid(format!(
                "clamp schedule defines {} terminals, circuit has {n}",
                self.initial.len()
            )));
        }
        let mut last = f64::NEG_INFINITY;
        for e in &self.events {
            if e.terminal >= n {
                return Err(invalid(format!(
                    "clamp event references unknown terminal {}",
                    e.terminal
                )));
            }
            if !(e.time >= last) {
                return Err(invalid("clamp event times must be non-decreasing"));
            }
            last = e.time;
        }
        Ok(())
    }
}

/// One p-block as seen by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSetup {
    pub cfg: PBlockConfig,
    pub mtj: MtjParams,
}

impl BlockSetup {
    /// Mean dwell times `(tau_P, tau_AP)` under the block's bias.
    pub fn dwell_times(&self) -> Result<(f64, f64)> {
        let tau = |s| -> Result<f64> {
            let i = analog::branch_current(
                self.cfg.v_block,
                self.cfg.r_sense,
                mtj::resistance(s, &self.mtj),
            )?;
            let b = mtj::effective_barrier(s, i, self.mtj.bias_field, &self.mtj);
            Ok(mtj::mean_dwell(b, self.mtj.tau0))
        };
        Ok((tau(MtjState::P)?, tau(MtjState::AP)?))
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        self.cfg.validate()?;
        self.mtj.validate()?;
        let (tp, tap) = self.dwell_times()?;
        let shortest = [
            tp,
            tap,
            if self.cfg.t_c > 0.0 {
                self.cfg.t_c
            } else {
                f64::INFINITY
            },
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
        // Relative slack so that exact ratios survive decimal rounding.
        if dt * TIMESTEP_MARGIN > shortest * (1.0 + 1e-9) {
            return Err(invalid(format!(
                "dt={dt} must be at least {TIMESTEP_MARGIN}x below every dwell time and nonzero t_c (shortest {shortest})"
            )));
        }
        Ok(())
    }
}

/// Per-block state advanced by [`BlockSim::advance_noise`].
#[derive(Debug, Clone)]
pub struct BlockSim {
    pub setup: BlockSetup,
    rng: SimRng,
    p_flip: [f64; 2],
    v_levels: [f64; 2],
    alpha: f64,
    pub state: MtjState,
    pub v_mtj: f64,
    pub v_filt: f64,
    pub v_thresh: f64,
    pub v_out: f64,
}

fn idx(s: MtjState) -> usize {
    match s {
        MtjState::P => 0,
        MtjState::AP => 1,
    }
}

impl BlockSim {
    /// Starts the MTJ in a state drawn from its stationary occupancy with the
    /// filter settled on the corresponding level.
    pub fn new(setup: BlockSetup, dt: f64, seed: u64, index: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, index);
        let (tp, tap) = setup.dwell_times()?;
        let (vp, vap) = setup.cfg.sense_levels(&setup.mtj);
        let occupancy_p = if tp.is_infinite() && tap.is_infinite() {
            0.5
        } else if tp.is_infinite() {
            1.0
        } else if tap.is_infinite() {
            0.0
        } else {
            tp / (tp + tap)
        };
        let state = if rng.random::<f64>() < occupancy_p {
            MtjState::P
        } else {
            MtjState::AP
        };
        let v_levels = [vp, vap];
        let v = v_levels[idx(state)];
        Ok(BlockSim {
            setup,
            rng,
            p_flip: [
                mtj::flip_probability(dt, tp),
                mtj::flip_probability(dt, tap),
            ],
            v_levels,
            alpha: analog::filter_alpha(dt, setup.cfg.t_c),
            state,
            v_mtj: v,
            v_filt: v,
            v_thresh: setup.cfg.sense_midpoint(&setup.mtj),
            v_out: setup.cfg.v_ss,
        })
    }

    /// Steps (1)-(4): branch current, MTJ transition, sense voltage, filter.
    #[inline]
    pub fn advance_noise(&mut self) {
        self.state =
            mtj::step_with_probability(self.state, self.p_flip[idx(self.state)], &mut self.rng);
        self.v_mtj = self.v_levels[idx(self.state)];
        self.v_filt += (self.v_mtj - self.v_filt) * self.alpha;
    }

    /// Steps (5)-(6): threshold from the input voltage, comparator.
    #[inline]
    pub fn compare(&mut self, v_in: f64) {
        self.v_thresh = analog::threshold_from_input(v_in, &self.setup.cfg);
        self.v_out = analog::comparator(self.v_filt, self.v_thresh, self.v_out, &self.setup.cfg);
    }

    pub fn logic(&self) -> bool {
        self.v_out > 0.0
    }
}

/// Sampled per-block observables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockSample {
    pub mtj_state: MtjState,
    pub v_mtj: f64,
    pub v_filt: f64,
    pub v_thresh: f64,
    pub v_out: f64,
    /// Extremes of `v_out` over the steps since the previous sample.
    pub v_out_min: f64,
    pub v_out_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSample {
    pub time: f64,
    pub blocks: Vec<BlockSample>,
    /// Clamp levels in force, empty for a lone p-block.
    pub clamps: Vec<ClampLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub samples: Vec<TraceSample>,
}

pub const TRACE_HEADER: &str =
    "time_s,blk,mtj_state,v_mtj,v_filt,v_thresh,v_out,clamp_A,clamp_B,clamp_C";

impl Trace {
    /// Logic code of each sample, block 0 in the most significant bit.
    pub fn codes(&self) -> Vec<usize> {
        self.samples
            .iter()
            .map(|s| {
                s.blocks
                    .iter()
                    .fold(0, |acc, b| (acc << 1) | usize::from(b.v_out > 0.0))
            })
            .collect()
    }

    /// Mean logic output of block `blk` over all samples.
    pub fn mean_logic(&self, blk: usize) -> f64 {
        let ones = self
            .samples
            .iter()
            .filter(|s| s.blocks[blk].v_out > 0.0)
            .count();
        ones as f64 / self.samples.len().max(1) as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(TRACE_HEADER.split(','))?;
        for s in &self.samples {
            for (b, blk) in s.blocks.iter().enumerate() {
                let clamp = |k: usize| s.clamps.get(k).map_or("-", |c| c.symbol()).to_string();
                out.write_record([
                    format!("{:e}", s.time),
                    b.to_string(),
                    blk.mtj_state.as_str().to_string(),
                    format!("{:e}", blk.v_mtj),
                    format!("{:e}", blk.v_filt),
                    format!("{:e}", blk.v_thresh),
                    format!("{}", blk.v_out),
                    clamp(0),
                    clamp(1),
                    clamp(2),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

struct Decimator {
    every: u64,
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl Decimator {
    fn new(every: u64, n: usize) -> Self {
        Decimator {
            every,
            mins: vec![f64::INFINITY; n],
            maxs: vec![f64::NEG_INFINITY; n],
        }
    }

    fn observe(&mut self, blocks: &[BlockSim]) {
        for (i, b) in blocks.iter().enumerate() {
            self.mins[i] = self.mins[i].min(b.v_out);
            self.maxs[i] = self.maxs[i].max(b.v_out);
        }
    }

    fn sample(&mut self, time: f64, blocks: &[BlockSim], clamps: &[ClampLevel]) -> TraceSample {
        let out = TraceSample {
            time,
            blocks: blocks
                .iter()
                .enumerate()
                .map(|(i, b)| BlockSample {
                    mtj_state: b.state,
                    v_mtj: b.v_mtj,
                    v_filt: b.v_filt,
                    v_thresh: b.v_thresh,
                    v_out: b.v_out,
                    v_out_min: self.mins[i].min(b.v_out),
                    v_out_max: self.maxs[i].max(b.v_out),
                })
                .collect(),
            clamps: clamps.to_vec(),
        };
        self.mins.iter_mut().for_each(|m| *m = f64::INFINITY);
        self.maxs.iter_mut().for_each(|m| *m = f64::NEG_INFINITY);
        out
    }
}

/// Single p-block driven by `input`.
pub struct PBlockSim {
    pub block: BlockSim,
    input: Waveform,
    dt: f64,
    step: u64,
}

impl PBlockSim {
    pub fn new(setup: BlockSetup, input: Waveform, sim: &SimConfig) -> Result<Self> {
        sim.validate()?;
        setup.validate(sim.dt)?;
        let mut block = BlockSim::new(setup, sim.dt, sim.seed, 0)?;
        block.compare(input.at(0.0));
        Ok(PBlockSim {
            block,
            input,
            dt: sim.dt,
            step: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    #[inline]
    pub fn step(&mut self) {
        self.step += 1;
        let t = self.time();
        self.block.advance_noise();
        self.block.compare(self.input.at(t));
    }
}

pub fn run_pblock(
    cfg: &PBlockConfig,
    mtj: &MtjParams,
    input: Waveform,
    sim: &SimConfig,
) -> Result<Trace> {
    let mut s = PBlockSim::new(
        BlockSetup {
            cfg: *cfg,
            mtj: *mtj,
        },
        input,
        sim,
    )?;
    let mut dec = Decimator::new(sim.steps_per_sample(), 1);
    let mut samples = vec![dec.sample(0.0, std::slice::from_ref(&s.block), &[])];
    for k in 1..=sim.steps() {
        s.step();
        dec.observe(std::slice::from_ref(&s.block));
        if k % dec.every == 0 {
            samples.push(dec.sample(s.time(), std::slice::from_ref(&s.block), &[]));
        }
    }
    Ok(Trace { samples })
}

/// Threshold of input `i` as an affine function of the block outputs,
/// recompiled whenever a clamp level changes.
#[derive(Debug, Clone)]
struct CompiledInput {
    constant: f64,
    /// Dense row over all blocks.
    weights: Vec<f64>,
}

/// Coupled p-circuit.
pub struct CircuitSim {
    pub blocks: Vec<BlockSim>,
    net: CouplingNetwork,
    schedule: ClampSchedule,
    pub clamps: Vec<ClampLevel>,
    next_event: usize,
    compiled: Vec<CompiledInput>,
    order: Vec<usize>,
    orders: Vec<Vec<usize>>,
    scheduler: SimRng,
    dt: f64,
    step: u64,
}

impl CircuitSim {
    pub fn new(
        blocks: &[BlockSetup],
        net: &CouplingNetwork,
        schedule: &ClampSchedule,
        sim: &SimConfig,
    ) -> Result<Self> {
        sim.validate()?;
        net.validate()?;
        let n = blocks.len();
        if net.n() != n {
            return Err(invalid(format!(
                "network has {} inputs for {n} blocks",
                net.n()
            )));
        }
        schedule.validate(n)?;
        let sims = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                b.validate(sim.dt)?;
                BlockSim::new(*b, sim.dt, sim.seed, i as u64)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut c = CircuitSim {
            blocks: sims,
            net: net.clone(),
            schedule: schedule.clone(),
            clamps: schedule.initial.clone(),
            next_event: 0,
            compiled: Vec::new(),
            order: (0..n).collect(),
            orders: if n <= MAX_TABULATED_BLOCKS {
                permutation_table(n)
            } else {
                Vec::new()
            },
            scheduler: rng::stream(sim.seed, SCHEDULER_STREAM),
            dt: sim.dt,
            step: 0,
        };
        c.apply_events(0.0);
        c.recompile();
        for i in 0..n {
            let v = c.input_voltage(i);
            c.blocks[i].compare(v);
        }
        Ok(c)
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    fn apply_events(&mut self, t: f64) -> bool {
        let mut changed = false;
        while let Some(e) = self.schedule.events.get(self.next_event) {
            if e.time > t + 0.5 * self.dt {
                break;
            }
            self.clamps[e.terminal] = e.level;
            self.next_event += 1;
            changed = true;
        }
        changed
    }

    /// Folds the Millman sum of each input and the block's divider into
    /// `threshold = constant + Σ w_j · v_out_j`.
    fn recompile(&mut self) {
        let (v_dd, v_ss) = (self.net.v_dd, self.net.v_ss);
        self.compiled = (0..self.blocks.len())
            .map(|i| {
                let mut g_total = 0.0;
                let mut num_const = 0.0;
                let mut weights: Vec<(usize, f64)> = Vec::new();
                let mut add_weight =
                    |j: usize, w: f64| match weights.iter_mut().find(|(k, _)| *k == j) {
                        Some(entry) => entry.1 += w,
                        None => weights.push((j, w)),
                    };
                for tap in &self.net.inputs[i] {
                    let g = tap.conductance;
                    match tap.source {
                        TapSource::OutputQ(j) => add_weight(j, g),
                        // Qbar = v_dd + v_ss - Q
                        TapSource::OutputQbar(j) => {
                            num_const += g * (v_dd + v_ss);
                            add_weight(j, -g);
                        }
                        TapSource::RailVdd => num_const += g * v_dd,
                        TapSource::RailVss => num_const += g * v_ss,
                        TapSource::ClampTerminal(_) => match self.clamps[i] {
                            ClampLevel::Float => continue,
                            ClampLevel::Drive0 => num_const += g * v_dd,
                            ClampLevel::Drive1 => num_const += g * v_ss,
                        },
                    }
                    g_total += g;
                }
                let (gain, offset) = self.blocks[i].setup.cfg.divider();
                // An input with no connected taps sits at 0 V.
                let scale = if g_total > 0.0 { gain / g_total } else { 0.0 };
                let mut dense = vec![0.0; self.blocks.len()];
                for (j, w) in weights {
                    dense[j] = w * scale;
                }
                CompiledInput {
                    constant: offset + scale * num_const,
                    weights: dense,
                }
            })
            .collect();
    }

    /// Millman voltage at input `i` given the current outputs.
    pub fn input_voltage(&self, i: usize) -> f64 {
        let thr = self.threshold(i);
        self.blocks[i].setup.cfg.input_for_threshold(thr)
    }

    #[inline]
    fn threshold(&self, i: usize) -> f64 {
        let c = &self.compiled[i];
        c.constant
            + c.weights
                .iter()
                .zip(&self.blocks)
                .map(|(w, b)| w * b.v_out)
                .sum::<f64>()
    }

    /// Resolved taps of input `i`, for checking the compiled form.
    pub fn input_taps(&self, i: usize) -> Vec<analog::SourceTap> {
        let (v_dd, v_ss) = (self.net.v_dd, self.net.v_ss);
        self.net.inputs[i]
            .iter()
            .filter_map(|t| {
                let voltage = match t.source {
                    TapSource::OutputQ(j) => self.blocks[j].v_out,
                    TapSource::OutputQbar(j) => v_dd + v_ss - self.blocks[j].v_out,
                    TapSource::RailVdd => v_dd,
                    TapSource::RailVss => v_ss,
                    TapSource::ClampTerminal(_) => match self.clamps[i] {
                        ClampLevel::Float => return None,
                        ClampLevel::Drive0 => v_dd,
                        ClampLevel::Drive1 => v_ss,
                    },
                };
                Some(analog::SourceTap {
                    voltage,
                    conductance: t.conductance,
                })
            })
            .collect()
    }

    #[inline]
    pub fn step(&mut self) {
        self.step += 1;
        let t = self.time();
        if self.next_event < self.schedule.events.len() && self.apply_events(t) {
            self.recompile();
        }
        for b in &mut self.blocks {
            b.advance_noise();
        }
        let order = if self.orders.is_empty() {
            use rand::seq::SliceRandom;
            self.order.shuffle(&mut self.scheduler);
            &self.order
        } else {
            &self.orders[self.scheduler.random_range(0..self.orders.len() as u32) as usize]
        };
        for k in 0..order.len() {
            let i = order[k];
            let thr = self.threshold(i);
            let b = &mut self.blocks[i];
            b.v_thresh = thr;
            b.v_out = analog::comparator(b.v_filt, thr, b.v_out, &b.setup.cfg);
        }
    }

    pub fn code(&self) -> usize {
        self.blocks
            .iter()
            .fold(0, |acc, b| (acc << 1) | usize::from(b.logic()))
    }
}

/// All permutations of `0..n`, for drawing a comparator order with a single
/// random index.
fn permutation_table(n: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                extend(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Largest circuit whose comparator orders are tabulated.
const MAX_TABULATED_BLOCKS: usize = 6;

pub fn run_pcircuit(
    blocks: &[BlockSetup],
    net: &CouplingNetwork,
    clamps: &ClampSchedule,
    sim: &SimConfig,
) -> Result<Trace> {
    let mut c = CircuitSim::new(blocks, net, clamps, sim)?;
    let mut dec = Decimator::new(sim.steps_per_sample(), blocks.len());
    let mut samples = vec![dec.sample(0.0, &c.blocks, &c.clamps)];
    for k in 1..=sim.steps() {
        c.step();
        dec.observe(&c.blocks);
        if k % dec.every == 0 {
            samples.push(dec.sample(c.time(), &c.blocks, &c.clamps));
        }
    }
    Ok(Trace { samples })
}
