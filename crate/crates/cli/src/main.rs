//! `psl`: runs the p-bit circuit experiments and writes CSV tables plus a
//! run manifest.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use psl_core::behavioral::{Clamp, ClampSpec};
use psl_core::config::{Config, TERMINALS};
use psl_core::engine::{run_pcircuit, ClampLevel, ClampSchedule, SimConfig};
use psl_core::experiments::{self, StabilizationSettings, StepSettings};
use psl_core::manifest::RunManifest;
use psl_core::synthesis::{network_to_ising, verify_degenerate_ground};
use psl_core::{report, PslError, Result};

#[derive(Parser, Debug)]
#[command(name = "psl", version, about = "Probabilistic spin logic circuit simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration merged over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the simulated duration of the chosen experiment.
    #[arg(long, global = true)]
    duration: Option<f64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mean output versus input for each filter constant.
    Transfer,
    /// Histogram of the filtered sense voltage for each filter constant.
    VmtjHist,
    /// Latency of the output after an input step.
    Step,
    /// Three blocks driven by a shared input ramp.
    Ramp,
    /// Logic-code histogram of the gate under a clamp assignment.
    Gate {
        /// Terminal assignment such as `A=0`; unnamed terminals float.
        #[arg(long = "clamp", value_name = "T=0|1|n")]
        clamps: Vec<String>,
        /// Also write a full trace of this many seconds.
        #[arg(long, default_value_t = 0.0)]
        trace: f64,
    },
    /// Gate convergence after clamp C switches from 1 to 0.
    Stabilize,
    /// Exact Boltzmann distribution of the gate.
    Oracle {
        #[arg(long = "clamp", value_name = "T=0|1|n")]
        clamps: Vec<String>,
    },
    /// Checks the gate's ground states and the network round trip.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Transfer => "transfer",
            Command::VmtjHist => "vmtj-hist",
            Command::Step => "step",
            Command::Ramp => "ramp",
            Command::Gate { .. } => "gate",
            Command::Stabilize => "stabilize",
            Command::Oracle { .. } => "oracle",
            Command::Verify => "verify",
        }
    }
}

fn parse_clamps(args: &[String]) -> Result<ClampSpec> {
    let mut spec = ClampSpec::free(TERMINALS.len());
    for a in args {
        let (t, v) = a.split_once('=').ok_or_else(|| PslError::Config(format!("clamp '{a}' is not T=value")))?;
        let idx = TERMINALS
            .iter()
            .position(|n| n.eq_ignore_ascii_case(t.trim()))
            .ok_or_else(|| PslError::Config(format!("unknown terminal '{t}'")))?;
        spec.0[idx] = Clamp::parse(v.trim()).map_err(|e| PslError::Config(e.to_string()))?;
    }
    Ok(spec)
}

fn load_config(g: &Global, command: &Command) -> Result<Config> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = g.seed {
        cfg.sim.seed = s;
    }
    if let Some(dt) = g.dt {
        cfg.sim.dt = dt;
    }
    if let Some(d) = g.duration {
        match command {
            Command::Transfer => cfg.transfer.duration = d,
            Command::VmtjHist => cfg.vmtj_hist.duration = d,
            Command::Step => cfg.step.window = d,
            Command::Ramp => cfg.ramp.duration = d,
            Command::Gate { .. } => cfg.gate.duration = d,
            Command::Stabilize => {
                cfg.stabilize.post_duration = d;
                cfg.stabilize.windows.retain(|&w| w <= d);
            }
            Command::Oracle { .. } | Command::Verify => {}
        }
    }
    cfg.validate()?;
    cfg.resolved()
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Outputs<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }
}

fn sim_for(cfg: &Config, duration: f64, sample_period: f64) -> SimConfig {
    SimConfig { dt: cfg.sim.dt, duration, sample_period, seed: cfg.sim.seed }
}

fn run(command: &Command, cfg: &Config, out: &mut Outputs) -> Result<()> {
    match command {
        Command::Transfer => {
            let setup = cfg.block_setup()?;
            let grid = cfg.transfer_grid()?;
            let sim = sim_for(cfg, cfg.transfer.duration, cfg.transfer.duration);
            let t = experiments::transfer_curve(&setup, &cfg.transfer.t_c, &grid, &sim)?;
            report::write_transfer(&t, out.create("transfer.csv")?)?;
            report::write_transfer_fits(&t, out.create("transfer_fits.csv")?)?;
        }
        Command::VmtjHist => {
            let setup = cfg.block_setup()?;
            let sim = sim_for(cfg, cfg.vmtj_hist.duration, cfg.vmtj_hist.duration);
            let h = experiments::vmtj_histogram(&setup, &cfg.vmtj_hist.t_c, cfg.vmtj_hist.bins, &sim)?;
            report::write_sense_histograms(&h, out.create("vmtj_hist.csv")?)?;
            report::write_sense_summary(&h, out.create("vmtj_hist_summary.csv")?)?;
        }
        Command::Step => {
            let setup = cfg.step_setup()?;
            let (v0, v1) = cfg.step_levels()?;
            let s = &cfg.step;
            let settings = StepSettings { captures: s.captures, v0, v1, t_step: s.t_step, window: s.window };
            let sim = sim_for(cfg, s.t_step + s.window, s.sample_period);
            let r = experiments::step_response(&setup, &settings, &sim)?;
            report::write_step_latencies(&r, out.create("step_latency.csv")?)?;
            report::write_step_summary(&r, out.create("step_summary.csv")?)?;
            report::write_step_overlay(&r, out.create("step_overlay.csv")?)?;
        }
        Command::Ramp => {
            let blocks = cfg.block_setups()?;
            let (v0, v1) = cfg.ramp_levels()?;
            let sim = sim_for(cfg, cfg.ramp.duration, cfg.ramp.sample_period);
            let r = experiments::ramp_test(&blocks, v0, v1, cfg.ramp.window, &sim)?;
            for row in &r.rows {
                if row.v_out.iter().zip(&blocks).any(|(&v, b)| v != b.cfg.v_dd && v != b.cfg.v_ss) {
                    return Err(PslError::Invariant(format!("output left the rails at t={}", row.time)));
                }
            }
            report::write_ramp(&r, &TERMINALS, out.create("ramp.csv")?)?;
        }
        Command::Gate { clamps, trace } => {
            let clamps = parse_clamps(clamps)?;
            let blocks = cfg.block_setups()?;
            let net = cfg.network()?;
            let legal = cfg.legal_set()?;
            let sim = cfg.gate_sim()?;
            let h = experiments::clamp_experiment(&blocks, &net, &clamps, &legal, cfg.gate.warmup, &sim)?;
            check_histogram(&h)?;
            let oracle = experiments::oracle_report(&cfg.ising_spec()?, &clamps, Some(&h))?;
            let label = clamps.label();
            report::write_state_histogram(&h, Some(&oracle.distribution), out.create(&format!("gate_{label}.csv"))?)?;
            if *trace > 0.0 {
                let schedule = ClampSchedule::constant(clamps.0.iter().map(|&c| ClampLevel::from_clamp(c)).collect());
                let tr = run_pcircuit(&blocks, &net, &schedule, &SimConfig { duration: *trace, ..sim })?;
                tr.write_csv(out.create(&format!("trace_{label}.csv"))?)?;
            }
        }
        Command::Stabilize => {
            let s = &cfg.stabilize;
            let settings = StabilizationSettings {
                captures: s.captures,
                t_flip: s.t_flip,
                post_duration: s.post_duration,
                sliding_window: s.sliding_window,
                onset_threshold: cfg.margins.onset_threshold,
            };
            let sim = sim_for(cfg, s.t_flip + s.post_duration, s.sample_period);
            let r = experiments::stabilization(&cfg.block_setups()?, &cfg.network()?, &cfg.legal_set()?, &s.windows, &settings, &sim)?;
            check_histogram(&r.stationary)?;
            report::write_stabilization_windows(&r, out.create("stabilize_windows.csv")?)?;
            report::write_stabilization_sliding(&r, out.create("stabilize_sliding.csv")?)?;
        }
        Command::Oracle { clamps } => {
            let clamps = parse_clamps(clamps)?;
            let spec = cfg.ising_spec()?;
            let r = experiments::oracle_report(&spec, &clamps, None)?;
            let label = clamps.label();
            report::write_oracle(&spec, &cfg.legal_set()?.codes, &r, out.create(&format!("oracle_{label}.csv"))?)?;
        }
        Command::Verify => {
            let spec = cfg.ising_spec()?;
            let legal = cfg.legal_set()?;
            let ground = verify_degenerate_ground(&spec, &legal)?;
            report::write_ground_report(&ground, spec.n(), out.create("verify_energies.csv")?)?;
            let net = cfg.network()?;
            net.write_text(out.create("network.txt")?)?;
            let back = network_to_ising(&net, cfg.gate.r_unit)?;
            let round_trip = back.j == spec.j && back.h == spec.h;
            if !ground.passed {
                return Err(PslError::Invariant(format!("ground-state check failed: {}", ground.reason.unwrap_or_default())));
            }
            if !round_trip {
                return Err(PslError::Invariant("network does not map back to the gate spec".into()));
            }
        }
    }
    Ok(())
}

fn check_histogram(h: &psl_core::stats::StateHistogram) -> Result<()> {
    let total: f64 = h.frequencies().iter().sum();
    if h.samples() == 0 || (total - 1.0).abs() > 1e-9 {
        return Err(PslError::Invariant(format!("histogram with {} samples sums to {total}", h.samples())));
    }
    Ok(())
}

fn exit_code(e: &PslError) -> u8 {
    match e {
        PslError::Config(_) => 2,
        PslError::Invariant(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = (|| -> Result<()> {
        let cfg = load_config(&cli.global, &cli.command)?;
        std::fs::create_dir_all(&cli.global.out)?;
        let mut manifest = RunManifest::new(cli.command.name(), std::env::args().skip(1).collect(), &cfg)?;
        let mut out = Outputs { dir: &cli.global.out, files: Vec::new() };
        let outcome = run(&cli.command, &cfg, &mut out);
        manifest.outputs = out.files;
        manifest.wall_clock_s = started.elapsed().as_secs_f64();
        manifest.write(&cli.global.out, &cfg)?;
        outcome
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
