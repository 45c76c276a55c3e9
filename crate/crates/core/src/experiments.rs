//! Named experiments over the engine: p-block transfer curves, sense-signal
//! histograms, step response, ramp test, clamped gate histograms,
//! stabilization after a clamp flip, and the bridge to the exact oracle.
//!
//! Every experiment derives the seed of each independent run from the base
//! seed and the run's position, so results do not depend on execution order.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use crate::behavioral::{boltzmann_oracle, ClampSpec, IsingSpec};
use crate::engine::{
    BlockSetup, BlockSim, CircuitSim, ClampEvent, ClampLevel, ClampSchedule, PBlockSim, SimConfig,
    Waveform,
};
use crate::error::{invalid, Result};
use crate::rng::derive_seed;
use crate::stats::{self, BinnedHistogram, CurveFit, StateHistogram};
use crate::synthesis::{CouplingNetwork, LegalSet};

/// Evaluates `f(0..count)` on a pool of scoped worker threads and returns
/// the results in index order.
pub fn par_map<R: Send>(count: usize, f: impl Fn(usize) -> Result<R> + Sync) -> Result<Vec<R>> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(count);
    if workers <= 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<R>>> = (0..count).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= count {
                            break done;
                        }
                        done.push((i, f(i)));
                    }
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("experiment worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every index is computed"))
        .collect()
}

/// Time to discard before collecting statistics: five filter constants plus
/// five mean dwells, at most half the run.
fn settle_time(setup: &BlockSetup, duration: f64) -> Result<f64> {
    let (tp, tap) = setup.dwell_times()?;
    let dwell = tp.max(tap);
    let settle = if dwell.is_finite() {
        5.0 * (setup.cfg.t_c + dwell)
    } else {
        5.0 * setup.cfg.t_c
    };
    Ok(settle.min(0.5 * duration))
}

/// Inputs spanning the transition region of `setup`: thresholds from a
/// quarter swing below the AP level to a quarter swing above the P level.
pub fn default_input_grid(setup: &BlockSetup, points: usize) -> Vec<f64> {
    let (vp, vap) = setup.cfg.sense_levels(&setup.mtj);
    let swing = vp - vap;
    let lo = setup.cfg.input_for_threshold(vap - 0.25 * swing);
    let hi = setup.cfg.input_for_threshold(vp + 0.25 * swing);
    let n = points.max(2);
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Mean logic output of a lone p-block held at `v_in`, averaged over every
/// step after settling.
pub fn mean_logic_output(setup: &BlockSetup, v_in: f64, sim: &SimConfig) -> Result<f64> {
    let mut s = PBlockSim::new(*setup, Waveform::Constant(v_in), sim)?;
    let settle = (settle_time(setup, sim.duration)? / sim.dt).round() as u64;
    let steps = sim.steps();
    let mut high = 0u64;
    for k in 1..=steps {
        s.step();
        if k > settle && s.block.logic() {
            high += 1;
        }
    }
    Ok(high as f64 / (steps - settle).max(1) as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferRow {
    pub t_c: f64,
    pub v_in: f64,
    pub mean_logic_out: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferCurve {
    pub rows: Vec<TransferRow>,
}

impl TransferCurve {
    pub fn for_t_c(&self, t_c: f64) -> (Vec<f64>, Vec<f64>) {
        self.rows
            .iter()
            .filter(|r| r.t_c == t_c)
            .map(|r| (r.v_in, r.mean_logic_out))
            .unzip()
    }

    pub fn t_c_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.t_c) {
                v.push(r.t_c);
            }
        }
        v
    }

    /// Largest increase between consecutive inputs; zero or negative means
    /// the curve is monotone non-increasing.
    pub fn max_rise(&self, t_c: f64) -> f64 {
        let (_, ys) = self.for_t_c(t_c);
        ys.windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn fit_logistic(&self, t_c: f64) -> Result<CurveFit> {
        let (xs, ys) = self.for_t_c(t_c);
        stats::fit_logistic(&xs, &ys)
    }

    pub fn fit_tanh(&self, t_c: f64) -> Result<CurveFit> {
        let (xs, ys) = self.for_t_c(t_c);
        stats::fit_scaled_tanh(&xs, &ys)
    }
}

/// Output average versus input for each filter constant. All inputs of one
/// filter constant share a seed: the MTJ path does not depend on the input,
/// so each run sees the same noise and only the threshold moves.
pub fn transfer_curve(
    setup: &BlockSetup,
    t_c_list: &[f64],
    inputs: &[f64],
    sim: &SimConfig,
) -> Result<TransferCurve> {
    let rows = par_map(t_c_list.len() * inputs.len(), |k| {
        let (a, b) = (k / inputs.len(), k % inputs.len());
        let (t_c, v_in) = (t_c_list[a], inputs[b]);
        let s = BlockSetup {
            cfg: crate::analog::PBlockConfig { t_c, ..setup.cfg },
            ..*setup
        };
        let run = SimConfig {
            seed: derive_seed(sim.seed, a as u64),
            ..*sim
        };
        Ok(TransferRow {
            t_c,
            v_in,
            mean_logic_out: mean_logic_output(&s, v_in, &run)?,
        })
    })?;
    Ok(TransferCurve { rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct SenseHistogram {
    pub t_c: f64,
    pub histogram: BinnedHistogram,
}

impl SenseHistogram {
    pub fn rail_mass(&self) -> f64 {
        self.histogram.rail_mass()
    }

    /// Prominent peaks of the lightly smoothed histogram.
    pub fn modes(&self) -> Vec<usize> {
        stats::prominent_peaks(
            &stats::smooth(&self.histogram.relative(), 1),
            MODE_PROMINENCE,
        )
    }

    pub fn has_single_interior_mode(&self) -> bool {
        let m = self.modes();
        m.len() == 1 && m[0] != 0 && m[0] != self.histogram.counts.len() - 1
    }
}

/// Minimum prominence, relative to the tallest bin, for a histogram peak to
/// count as a mode.
pub const MODE_PROMINENCE: f64 = 0.1;

/// Histogram of the filtered sense voltage over the two-level range, sampled
/// at every step after settling.
pub fn vmtj_histogram(
    setup: &BlockSetup,
    t_c_list: &[f64],
    bins: usize,
    sim: &SimConfig,
) -> Result<Vec<SenseHistogram>> {
    let (vp, vap) = setup.cfg.sense_levels(&setup.mtj);
    par_map(t_c_list.len(), |a| {
        let t_c = t_c_list[a];
        let s = BlockSetup {
            cfg: crate::analog::PBlockConfig { t_c, ..setup.cfg },
            ..*setup
        };
        let run = SimConfig {
            seed: derive_seed(sim.seed, a as u64),
            ..*sim
        };
        let mut p = PBlockSim::new(s, Waveform::Constant(0.0), &run)?;
        let settle = (settle_time(&s, run.duration)? / run.dt).round() as u64;
        let mut h = BinnedHistogram::new(vap, vp, bins)?;
        for k in 1..=run.steps() {
            p.step();
            if k > settle {
                h.add(p.block.v_filt);
            }
        }
        Ok(SenseHistogram { t_c, histogram: h })
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepSettings {
    pub captures: usize,
    pub v0: f64,
    pub v1: f64,
    pub t_step: f64,
    /// Time after the step within which a response must occur.
    pub window: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OverlayRow {
    pub capture: usize,
    pub time: f64,
    pub v_in: f64,
    pub v_out: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepResponse {
    /// First-response latency per capture; `None` when censored.
    pub latencies: Vec<Option<f64>>,
    pub min: Option<f64>,
    pub median: Option<f64>,
    pub p95: Option<f64>,
    pub censored: usize,
    pub overlay: Vec<OverlayRow>,
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

/// Feeds a step to the input and measures, per capture, the delay until the
/// output first sits at the level favoured by the new threshold.
pub fn step_response(
    setup: &BlockSetup,
    settings: &StepSettings,
    sim: &SimConfig,
) -> Result<StepResponse> {
    if settings.captures == 0 || !(settings.t_step > 0.0) || !(settings.window > 0.0) {
        return Err(invalid(
            "step response needs captures >= 1 and positive t_step and window",
        ));
    }
    let (vp, vap) = setup.cfg.sense_levels(&setup.mtj);
    let th0 = crate::analog::threshold_from_input(settings.v0, &setup.cfg);
    let th1 = crate::analog::threshold_from_input(settings.v1, &setup.cfg);
    // A step that stays on one side of the sense range changes nothing.
    let crosses = !((th0 < vap && th1 < vap) || (th0 > vp && th1 > vp)) && th0 != th1;
    let target_high = th1 < th0;
    let run_len = settings.t_step + settings.window;
    let run_sim = SimConfig {
        duration: run_len,
        sample_period: sim.sample_period.min(run_len),
        ..*sim
    };
    let wave = Waveform::Step {
        v0: settings.v0,
        v1: settings.v1,
        t_step: settings.t_step,
    };
    let every = run_sim.steps_per_sample();
    let step_index = (settings.t_step / sim.dt).round() as u64;
    let captures = par_map(settings.captures, |c| {
        let run = SimConfig {
            seed: derive_seed(sim.seed, c as u64),
            ..run_sim
        };
        let mut p = PBlockSim::new(*setup, wave, &run)?;
        let mut latency = None;
        let mut overlay = Vec::new();
        for k in 1..=run.steps() {
            p.step();
            if k % every == 0 {
                overlay.push(OverlayRow {
                    capture: c,
                    time: p.time(),
                    v_in: wave.at(p.time()),
                    v_out: p.block.v_out,
                });
            }
            if crosses && latency.is_none() && k > step_index && p.block.logic() == target_high {
                latency = Some((k - step_index) as f64 * sim.dt);
            }
        }
        Ok((latency, overlay))
    })?;
    let latencies: Vec<Option<f64>> = captures.iter().map(|c| c.0).collect();
    let overlay = captures.into_iter().flat_map(|c| c.1).collect();
    let mut observed: Vec<f64> = latencies.iter().flatten().copied().collect();
    observed.sort_by(f64::total_cmp);
    Ok(StepResponse {
        min: observed.first().copied(),
        median: percentile(&observed, 0.5),
        p95: percentile(&observed, 0.95),
        censored: latencies.iter().filter(|l| l.is_none()).count(),
        latencies,
        overlay,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RampRow {
    pub time: f64,
    pub v_in: f64,
    pub v_out: Vec<f64>,
    /// Trailing-window mean logic output per block.
    pub window_mean: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RampTest {
    pub rows: Vec<RampRow>,
    /// Mean logic output per block over the first and last windows.
    pub start_mean: Vec<f64>,
    pub end_mean: Vec<f64>,
}

/// Drives every block, disconnected from the network, with the same ramp.
pub fn ramp_test(
    blocks: &[BlockSetup],
    v0: f64,
    v1: f64,
    window: f64,
    sim: &SimConfig,
) -> Result<RampTest> {
    sim.validate()?;
    if !(window > 0.0 && window < 0.5 * sim.duration) {
        return Err(invalid(
            "ramp window must be positive and shorter than half the ramp",
        ));
    }
    let wave = Waveform::Ramp {
        v0,
        v1,
        t0: 0.0,
        t1: sim.duration,
    };
    let mut sims = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            b.validate(sim.dt)?;
            let mut s = BlockSim::new(*b, sim.dt, sim.seed, i as u64)?;
            s.compare(wave.at(0.0));
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = blocks.len();
    let steps = sim.steps();
    let every = sim.steps_per_sample();
    let win_steps = (window / sim.dt).round() as u64;
    // Per-step logic history is summarized by prefix sums at sample points.
    let mut ones = vec![0u64; n];
    let mut prefix: Vec<(u64, Vec<u64>)> = vec![(0, ones.clone())];
    let mut rows = Vec::new();
    let mut start_mean = vec![0.0; n];
    for k in 1..=steps {
        let t = k as f64 * sim.dt;
        let v_in = wave.at(t);
        for (i, s) in sims.iter_mut().enumerate() {
            s.advance_noise();
            s.compare(v_in);
            ones[i] += u64::from(s.logic());
        }
        if k == win_steps {
            start_mean = ones.iter().map(|&o| o as f64 / win_steps as f64).collect();
        }
        if k % every == 0 {
            prefix.push((k, ones.clone()));
            let lo = k.saturating_sub(win_steps);
            // Nearest recorded prefix at or before the window start.
            let base = prefix
                .iter()
                .rev()
                .find(|(kk, _)| *kk <= lo)
                .expect("prefix at 0");
            let span = (k - base.0).max(1) as f64;
            rows.push(RampRow {
                time: t,
                v_in,
                v_out: sims.iter().map(|s| s.v_out).collect(),
                window_mean: (0..n)
                    .map(|i| (ones[i] - base.1[i]) as f64 / span)
                    .collect(),
            });
        }
    }
    let tail_base = prefix
        .iter()
        .rev()
        .find(|(kk, _)| *kk <= steps - win_steps)
        .expect("prefix at 0");
    let tail_span = (steps - tail_base.0) as f64;
    let end_mean = (0..n)
        .map(|i| (ones[i] - tail_base.1[i]) as f64 / tail_span)
        .collect();
    Ok(RampTest {
        rows,
        start_mean,
        end_mean,
    })
}

fn schedule_for(clamps: &ClampSpec) -> ClampSchedule {
    ClampSchedule::constant(
        clamps
            .0
            .iter()
            .map(|&c| ClampLevel::from_clamp(c))
            .collect(),
    )
}

/// Histogram of logic codes of the coupled circuit under a fixed clamp
/// assignment, sampled every `sim.sample_period` after `warmup`.
pub fn clamp_experiment(
    blocks: &[BlockSetup],
    net: &CouplingNetwork,
    clamps: &ClampSpec,
    legal: &LegalSet,
    warmup: f64,
    sim: &SimConfig,
) -> Result<StateHistogram> {
    if clamps.0.len() != blocks.len() {
        return Err(invalid("clamp assignment must name every terminal"));
    }
    let mut c = CircuitSim::new(blocks, net, &schedule_for(clamps), sim)?;
    let every = sim.steps_per_sample();
    let skip = (warmup / sim.dt).round() as u64;
    let mut hist = StateHistogram::empty(blocks.len());
    for k in 1..=sim.steps() {
        c.step();
        if k > skip && k % every == 0 {
            hist.record(c.code());
        }
    }
    Ok(hist.with_legality(&legal.codes))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilizationSettings {
    /// Number of independent flip captures pooled together.
    pub captures: usize,
    pub t_flip: f64,
    /// Simulated time after the flip.
    pub post_duration: f64,
    pub sliding_window: f64,
    /// `[AB]='11'` frequency below which the flip counts as having acted.
    pub onset_threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowResult {
    pub window: f64,
    pub histogram: StateHistogram,
    pub tv_to_stationary: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stabilization {
    pub windows: Vec<WindowResult>,
    pub stationary: StateHistogram,
    /// Time after the flip at which the `[AB]='11'` frequency over the
    /// trailing window, clipped at the flip, first drops below the onset
    /// threshold.
    pub onset: Option<f64>,
    /// `(time after flip, trailing-window [AB]='11' frequency)`.
    pub sliding: Vec<(f64, f64)>,
}

/// Clamp C is driven to logic '1' from the start and switched to logic '0'
/// at `t_flip`; samples after the flip are pooled over captures.
pub fn stabilization(
    blocks: &[BlockSetup],
    net: &CouplingNetwork,
    legal: &LegalSet,
    windows: &[f64],
    settings: &StabilizationSettings,
    sim: &SimConfig,
) -> Result<Stabilization> {
    let n = blocks.len();
    if n < 3 {
        return Err(invalid("stabilization needs a three-terminal gate"));
    }
    if settings.captures == 0 || !(settings.post_duration > 0.0) || !(settings.t_flip > 0.0) {
        return Err(invalid(
            "stabilization needs captures >= 1 and positive times",
        ));
    }
    let c_terminal = n - 1;
    let mut initial = vec![ClampLevel::Float; n];
    initial[c_terminal] = ClampLevel::Drive1;
    let schedule = ClampSchedule {
        initial,
        events: vec![ClampEvent {
            time: settings.t_flip,
            terminal: c_terminal,
            level: ClampLevel::Drive0,
        }],
    };
    let run_sim = SimConfig {
        duration: settings.t_flip + settings.post_duration,
        ..*sim
    };
    let every = run_sim.steps_per_sample();
    let flip_step = (settings.t_flip / sim.dt).round() as u64;
    let n_post = ((run_sim.steps() - flip_step) / every) as usize;
    let sample_dt = every as f64 * sim.dt;
    let ab_mask = 0b11 << (n - 2);
    let win = ((settings.sliding_window / sample_dt).round() as usize).max(1);
    // codes[capture][sample index after flip]
    let runs = par_map(settings.captures, |cap| {
        let run = SimConfig {
            seed: derive_seed(sim.seed, cap as u64),
            ..run_sim
        };
        let mut c = CircuitSim::new(blocks, net, &schedule, &run)?;
        let mut series = Vec::with_capacity(n_post);
        for k in 1..=run.steps() {
            c.step();
            if k > flip_step && (k - flip_step) % every == 0 {
                series.push(c.code());
            }
        }
        Ok(series)
    })?;
    let codes = runs;
    let pooled = |count: usize| {
        let mut h = StateHistogram::empty(n);
        for series in &codes {
            for &code in series.iter().take(count) {
                h.record(code);
            }
        }
        h.with_legality(&legal.codes)
    };
    let stationary = pooled(usize::MAX);
    let p_stat = stationary.frequencies();
    let windows = windows
        .iter()
        .map(|&w| {
            let count = ((w / sample_dt).round() as usize).max(1);
            let histogram = pooled(count);
            let tv = stats::tv_distance(&histogram.frequencies(), &p_stat);
            WindowResult {
                window: w,
                histogram,
                tv_to_stationary: tv,
            }
        })
        .collect();

    // Trailing window over time, clipped at the flip.
    let mut sliding = Vec::new();
    let mut onset = None;
    for idx in 0..n_post {
        let start = (idx + 1).saturating_sub(win);
        let hits: usize = codes.iter().map(|series| series[start..=idx].iter().filter(|&&c| c & ab_mask == ab_mask).count()).sum();
        let total = codes.len() * (idx + 1 - start);
        let freq = hits as f64 / total as f64;
        let t = (idx + 1) as f64 * sample_dt;
        sliding.push((t, freq));
        if onset.is_none() && freq < settings.onset_threshold {
            onset = Some(t);
        }
    }
    Ok(Stabilization {
        windows,
        stationary,
        onset,
        sliding,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub clamps: String,
    pub distribution: Vec<f64>,
    /// Filled when compared against a measured histogram.
    pub tv: Option<f64>,
    pub deltas: Option<Vec<f64>>,
}

pub fn oracle_report(
    spec: &IsingSpec,
    clamps: &ClampSpec,
    measured: Option<&StateHistogram>,
) -> Result<OracleReport> {
    let distribution = boltzmann_oracle(spec, clamps)?;
    let (tv, deltas) = match measured {
        Some(h) => {
            let f = h.frequencies();
            if f.len() != distribution.len() {
                return Err(invalid("histogram and oracle sizes differ"));
            }
            let deltas = f.iter().zip(&distribution).map(|(a, b)| a - b).collect();
            (Some(stats::tv_distance(&f, &distribution)), Some(deltas))
        }
        None => (None, None),
    };
    Ok(OracleReport {
        clamps: clamps.label(),
        distribution,
        tv,
        deltas,
    })
}

/// Grid search for the `beta·i0` whose free-running oracle is closest in
/// total variation to `free_run`.
pub fn calibrate_beta(
    spec: &IsingSpec,
    free_run: &StateHistogram,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<(f64, f64)> {
    if !(hi > lo && lo >= 0.0) || points < 2 {
        return Err(invalid(
            "calibration range must satisfy 0 <= lo < hi with at least 2 points",
        ));
    }
    let f = free_run.frequencies();
    let clamps = ClampSpec::free(spec.n());
    let mut best = (lo, f64::INFINITY);
    for k in 0..points {
        let b = lo + (hi - lo) * k as f64 / (points - 1) as f64;
        let tv = stats::tv_distance(
            &f,
            &boltzmann_oracle(&spec.with_effective_beta(b), &clamps)?,
        );
        if tv < best.1 {
            best = (b, tv);
        }
    }
    Ok(best)
}

/// The eleven clamp assignments of the gate measurements, `[ABC]` order:
/// complete forward (AB clamped), incomplete forward (A or B clamped to
/// '0'), backward (C clamped), mixed (B and C clamped) and free run.
pub const GATE_ASSIGNMENTS: [&str; 11] = [
    "00n", "01n", "10n", "11n", "0nn", "n0n", "nn0", "nn1", "n01", "n11", "nnn",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::PBlockConfig;
    use crate::mtj::MtjParams;
    use crate::synthesis::{and_gate_spec, ising_to_network, SynthesisOptions};

    fn setup() -> BlockSetup {
        BlockSetup {
            cfg: PBlockConfig::default(),
            mtj: MtjParams::default(),
        }
    }

    fn sim(duration: f64) -> SimConfig {
        SimConfig {
            dt: 1e-9,
            duration,
            sample_period: 5e-6,
            seed: 11,
        }
    }

    fn and_net() -> CouplingNetwork {
        ising_to_network(
            &and_gate_spec(),
            1e4,
            &PBlockConfig::default(),
            &SynthesisOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), Some(95.0));
        assert_eq!(percentile(&v, 0.5), Some(50.0));
        assert_eq!(percentile(&[3.0], 0.95), Some(3.0));
        assert_eq!(percentile(&[], 0.5), None);
    }

    #[test]
    fn transfer_saturates_and_decreases() {
        let s = setup();
        let grid = default_input_grid(&s, 7);
        let t = transfer_curve(&s, &[1e-6], &grid, &sim(2e-4)).unwrap();
        let (_, ys) = t.for_t_c(1e-6);
        assert_eq!(ys[0], 1.0);
        assert_eq!(ys[6], 0.0);
        assert!(t.max_rise(1e-6) <= 0.0);
    }

    #[test]
    fn unfiltered_histogram_sits_on_the_rails() {
        let h = vmtj_histogram(&setup(), &[0.0], 16, &sim(1e-4)).unwrap();
        assert_eq!(h[0].rail_mass(), 1.0);
        assert_eq!(h[0].histogram.total(), 100_000 - 5_000);
    }

    #[test]
    fn saturated_step_is_censored() {
        let s = setup();
        let (vp, _) = s.cfg.sense_levels(&s.mtj);
        let high = s.cfg.input_for_threshold(vp + 0.01);
        let settings = StepSettings {
            captures: 3,
            v0: high,
            v1: high + 0.5,
            t_step: 1e-6,
            window: 1e-6,
        };
        let r = step_response(&s, &settings, &sim(1e-5)).unwrap();
        assert_eq!(r.censored, 3);
        assert_eq!(r.p95, None);
    }

    #[test]
    fn full_swing_step_responds_within_a_step() {
        let s = BlockSetup {
            cfg: PBlockConfig {
                t_c: 1e-7,
                ..PBlockConfig::default()
            },
            ..setup()
        };
        let (vp, vap) = s.cfg.sense_levels(&s.mtj);
        let v0 = s.cfg.input_for_threshold(vp + 0.01);
        let v1 = s.cfg.input_for_threshold(vap - 0.01);
        let settings = StepSettings {
            captures: 5,
            v0,
            v1,
            t_step: 1e-6,
            window: 1e-6,
        };
        let r = step_response(
            &s,
            &settings,
            &SimConfig {
                sample_period: 1e-8,
                ..sim(1e-5)
            },
        )
        .unwrap();
        assert_eq!(r.censored, 0);
        assert!(r.min.unwrap() >= 1e-9 * (1.0 - 1e-12));
        assert!(!r.overlay.is_empty());
    }

    #[test]
    fn ramp_runs_from_one_to_zero() {
        let s = setup();
        let (vp, vap) = s.cfg.sense_levels(&s.mtj);
        let v0 = s.cfg.input_for_threshold(vap - 0.01);
        let v1 = s.cfg.input_for_threshold(vp + 0.01);
        let r = ramp_test(
            &[s; 3],
            v0,
            v1,
            2e-5,
            &SimConfig {
                sample_period: 1e-6,
                ..sim(2e-4)
            },
        )
        .unwrap();
        for i in 0..3 {
            assert!(r.start_mean[i] > 0.99);
            assert!(r.end_mean[i] < 0.01);
        }
        assert!(r
            .rows
            .iter()
            .all(|row| row.v_out.iter().all(|&v| v == 1.65 || v == -1.65)));
    }

    #[test]
    fn fully_clamped_gate_histogram_is_pinned() {
        let h = clamp_experiment(
            &[setup(); 3],
            &and_net(),
            &ClampSpec::parse("010").unwrap(),
            &LegalSet::and_gate(),
            1e-6,
            &sim(1e-4),
        )
        .unwrap();
        assert_eq!(h.modal_code(), 0b010);
        assert!(h.frequencies()[0b010] > 0.99);
        assert!(h.legality().unwrap()[0b010]);
    }

    #[test]
    fn stabilization_full_window_matches_itself() {
        let settings = StabilizationSettings {
            captures: 2,
            t_flip: 2e-5,
            post_duration: 5e-5,
            sliding_window: 1e-5,
            onset_threshold: 0.2,
        };
        let r = stabilization(
            &[setup(); 3],
            &and_net(),
            &LegalSet::and_gate(),
            &[1e-5, 5e-5],
            &settings,
            &SimConfig {
                sample_period: 1e-7,
                ..sim(1.0)
            },
        )
        .unwrap();
        assert_eq!(r.windows[1].tv_to_stationary, 0.0);
        assert_eq!(r.stationary.samples(), 1000);
        assert_eq!(r.sliding.len(), 500);
    }

    #[test]
    fn oracle_against_itself_has_zero_distance() {
        let spec = and_gate_spec();
        let p = boltzmann_oracle(&spec, &ClampSpec::free(3)).unwrap();
        let counts = p.iter().map(|x| (x * 1e9).round() as u64).collect();
        let h = StateHistogram::from_counts(3, counts).unwrap();
        let r = oracle_report(&spec, &ClampSpec::free(3), Some(&h)).unwrap();
        assert!(r.tv.unwrap() < 1e-8);
        assert!((r.distribution[0] - 0.2466).abs() < 1e-4);
    }

    #[test]
    fn calibration_recovers_a_known_beta() {
        let spec = and_gate_spec();
        let p = boltzmann_oracle(&spec.with_effective_beta(0.4), &ClampSpec::free(3)).unwrap();
        let h =
            StateHistogram::from_counts(3, p.iter().map(|x| (x * 1e9).round() as u64).collect())
                .unwrap();
        let (b, tv) = calibrate_beta(&spec, &h, 0.05, 5.0, 496).unwrap();
        assert!((b - 0.4).abs() < 0.011);
        assert!(tv < 0.01);
        assert!(calibrate_beta(&spec, &h, 1.0, 0.5, 10).is_err());
    }
}
