//! Invertible AND gate and the mapping between Ising specifications and
//! resistor coupling networks.
//!
//! A p-block is inverting: raising its input raises the comparator threshold
//! and lowers the output average. Positive couplings therefore tap the
//! complementary output `Qbar` of the source block, negative ones tap `Q`,
//! and a positive bias pulls the input towards `V_ss`. Nodes are padded with
//! equal conductances to both rails so every input sees the same total
//! conductance, which keeps the effective gain uniform across blocks.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analog::PBlockConfig;
use crate::behavioral::{IsingSpec, SpinState, MAX_ENUMERATION_NODES};
use crate::error::{invalid, PslError, Result};

/// Codes satisfying a gate constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LegalSet {
    pub n: usize,
    pub codes: Vec<usize>,
}

impl LegalSet {
    /// `C = A·B` in `[ABC]` order: 000, 010, 100, 111.
    pub fn and_gate() -> Self {
        LegalSet {
            n: 3,
            codes: vec![0b000, 0b010, 0b100, 0b111],
        }
    }

    pub fn contains(&self, code: usize) -> bool {
        self.codes.contains(&code)
    }
}

/// Default invertible AND: `J_AB = -1`, `J_AC = J_BC = 2`, `h = (1, 1, -2)`.
/// Legal states sit at energy -3, the nearest illegal ones at +1.
pub fn and_gate_spec() -> IsingSpec {
    IsingSpec {
        j: vec![
            vec![0.0, -1.0, 2.0],
            vec![-1.0, 0.0, 2.0],
            vec![2.0, 2.0, 0.0],
        ],
        h: vec![1.0, 1.0, -2.0],
        i0: 1.0,
        beta: 1.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundStateReport {
    pub passed: bool,
    /// `(code, energy, legal)` for every state.
    pub energies: Vec<(usize, f64, bool)>,
    /// Lowest illegal energy minus highest legal energy.
    pub gap: f64,
    pub reason: Option<String>,
}

/// Passes iff every legal state has the same energy and every illegal state
/// lies strictly above it.
pub fn verify_degenerate_ground(spec: &IsingSpec, legal: &LegalSet) -> Result<GroundStateReport> {
    spec.validate()?;
    let n = spec.n();
    if n > MAX_ENUMERATION_NODES {
        return Err(invalid(format!(
            "enumeration limited to {MAX_ENUMERATION_NODES} nodes"
        )));
    }
    if legal.n != n {
        return Err(invalid("legal set and spec disagree on node count"));
    }
    let energies: Vec<(usize, f64, bool)> = (0..1usize << n)
        .map(|c| {
            (
                c,
                spec.energy(&SpinState::from_code(c, n)),
                legal.contains(c),
            )
        })
        .collect();
    let legal_e: Vec<f64> = energies.iter().filter(|e| e.2).map(|e| e.1).collect();
    let illegal_min = energies
        .iter()
        .filter(|e| !e.2)
        .map(|e| e.1)
        .fold(f64::INFINITY, f64::min);
    let (lo, hi) = legal_e
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| {
            (a.min(e), b.max(e))
        });
    let tol = 1e-9 * hi.abs().max(1.0);
    let gap = illegal_min - hi;
    let reason = if legal_e.is_empty() {
        Some("legal set is empty".to_string())
    } else if hi - lo > tol {
        Some(format!(
            "legal energies are not degenerate (spread {})",
            hi - lo
        ))
    } else if !(gap > tol) {
        Some(format!(
            "illegal state not strictly above legal minimum (gap {gap})"
        ))
    } else {
        None
    };
    Ok(GroundStateReport {
        passed: reason.is_none(),
        energies,
        gap,
        reason,
    })
}

/// Where a coupling resistor is connected on its far side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TapSource {
    OutputQ(usize),
    OutputQbar(usize),
    RailVdd,
    RailVss,
    ClampTerminal(usize),
}

impl fmt::Display for TapSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TapSource::OutputQ(j) => write!(f, "q:{j}"),
            TapSource::OutputQbar(j) => write!(f, "qbar:{j}"),
            TapSource::RailVdd => write!(f, "vdd"),
            TapSource::RailVss => write!(f, "vss"),
            TapSource::ClampTerminal(k) => write!(f, "clamp:{k}"),
        }
    }
}

impl FromStr for TapSource {
    type Err = PslError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, idx) = match s.split_once(':') {
            Some((k, i)) => (
                k,
                Some(
                    i.parse::<usize>()
                        .map_err(|_| invalid(format!("bad tap index in '{s}'")))?,
                ),
            ),
            None => (s, None),
        };
        match (kind, idx) {
            ("q", Some(j)) => Ok(TapSource::OutputQ(j)),
            ("qbar", Some(j)) => Ok(TapSource::OutputQbar(j)),
            ("vdd", None) => Ok(TapSource::RailVdd),
            ("vss", None) => Ok(TapSource::RailVss),
            ("clamp", Some(k)) => Ok(TapSource::ClampTerminal(k)),
            _ => Err(invalid(format!("unknown tap source '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkTap {
    pub source: TapSource,
    /// Conductance (S).
    pub conductance: f64,
}

/// Resistor network feeding the inputs of the p-blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingNetwork {
    /// Taps per p-block input node; the node's clamp tap is included.
    pub inputs: Vec<Vec<NetworkTap>>,
    pub v_dd: f64,
    pub v_ss: f64,
}

/// Knobs of [`ising_to_network`] beyond the unit resistance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisOptions {
    /// Clamp resistor as a fraction of `r_unit`.
    pub clamp_ratio: f64,
    /// Pad every input with equal conductance to both rails up to this
    /// total (in units of `1/r_unit`). `0` pads to the largest node total,
    /// a negative value disables padding.
    pub pad_to: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            clamp_ratio: 0.01,
            pad_to: 0.0,
        }
    }
}

impl CouplingNetwork {
    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    /// Clamp conductance of input `k`, if it has a clamp terminal.
    pub fn clamp_conductance(&self, k: usize) -> Option<f64> {
        self.inputs[k]
            .iter()
            .find(|t| t.source == TapSource::ClampTerminal(k))
            .map(|t| t.conductance)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if !(self.v_dd > 0.0 && self.v_ss < 0.0) {
            return Err(invalid("network rails must satisfy v_dd > 0 > v_ss"));
        }
        for (i, taps) in self.inputs.iter().enumerate() {
            for t in taps {
                if !(t.conductance > 0.0 && t.conductance.is_finite()) {
                    return Err(invalid(format!("input {i}: conductance must be positive")));
                }
                match t.source {
                    TapSource::OutputQ(j) | TapSource::OutputQbar(j) if j >= n => {
                        return Err(invalid(format!(
                            "input {i}: tap references missing block {j}"
                        )))
                    }
                    TapSource::OutputQ(j) | TapSource::OutputQbar(j) if j == i => {
                        return Err(invalid(format!("input {i}: self feedback is not allowed")))
                    }
                    TapSource::ClampTerminal(k) if k != i => {
                        return Err(invalid(format!(
                            "input {i}: clamp terminal {k} belongs to another input"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Writes the tap list as CSV with a `#` header carrying the rails.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# v_dd={} v_ss={}", self.v_dd, self.v_ss)?;
        writeln!(w, "node,source,conductance_s")?;
        for (i, taps) in self.inputs.iter().enumerate() {
            for t in taps {
                writeln!(w, "{i},{},{:e}", t.source, t.conductance)?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut v_dd = None;
        let mut v_ss = None;
        let mut inputs: Vec<Vec<NetworkTap>> = Vec::new();
        let mut header_seen = false;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("v_dd", v)) => v_dd = v.parse().ok(),
                        Some(("v_ss", v)) => v_ss = v.parse().ok(),
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                if line != "node,source,conductance_s" {
                    return Err(invalid(format!("unexpected network header '{line}'")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(invalid(format!("malformed network row '{line}'")));
            }
            let node: usize = fields[0]
                .parse()
                .map_err(|_| invalid(format!("bad node in '{line}'")))?;
            let source: TapSource = fields[1].parse()?;
            let conductance: f64 = fields[2]
                .parse()
                .map_err(|_| invalid(format!("bad conductance in '{line}'")))?;
            if inputs.len() <= node {
                inputs.resize(node + 1, Vec::new());
            }
            inputs[node].push(NetworkTap {
                source,
                conductance,
            });
        }
        let net = CouplingNetwork {
            inputs,
            v_dd: v_dd.ok_or_else(|| invalid("network file lacks v_dd"))?,
            v_ss: v_ss.ok_or_else(|| invalid("network file lacks v_ss"))?,
        };
        net.validate()?;
        Ok(net)
    }
}

/// Encodes `spec` as resistor taps with unit resistance `r_unit`.
pub fn ising_to_network(
    spec: &IsingSpec,
    r_unit: f64,
    cfg: &PBlockConfig,
    opts: &SynthesisOptions,
) -> Result<CouplingNetwork> {
    if !(r_unit > 0.0 && r_unit.is_finite()) {
        return Err(invalid(format!("r_unit must be positive, got {r_unit}")));
    }
    if !(opts.clamp_ratio > 0.0) {
        return Err(invalid("clamp_ratio must be positive"));
    }
    spec.validate()?;
    let n = spec.n();
    let totals: Vec<f64> = (0..n)
        .map(|i| spec.j[i].iter().map(|x| x.abs()).sum::<f64>() + spec.h[i].abs())
        .collect();
    let pad_target = if opts.pad_to < 0.0 {
        None
    } else if opts.pad_to == 0.0 {
        Some(totals.iter().copied().fold(0.0, f64::max))
    } else {
        if opts.pad_to < totals.iter().copied().fold(0.0, f64::max) {
            return Err(invalid("pad_to is below the largest node conductance"));
        }
        Some(opts.pad_to)
    };
    let inputs = (0..n)
        .map(|i| {
            let mut taps = Vec::new();
            for (j, &jij) in spec.j[i].iter().enumerate() {
                if jij != 0.0 {
                    let source = if jij > 0.0 {
                        TapSource::OutputQbar(j)
                    } else {
                        TapSource::OutputQ(j)
                    };
                    taps.push(NetworkTap {
                        source,
                        conductance: jij.abs() / r_unit,
                    });
                }
            }
            let h = spec.h[i];
            if h != 0.0 {
                let source = if h > 0.0 {
                    TapSource::RailVss
                } else {
                    TapSource::RailVdd
                };
                taps.push(NetworkTap {
                    source,
                    conductance: h.abs() / r_unit,
                });
            }
            if let Some(target) = pad_target {
                let pad = 0.5 * (target - totals[i]);
                if pad > 1e-12 * target {
                    taps.push(NetworkTap {
                        source: TapSource::RailVdd,
                        conductance: pad / r_unit,
                    });
                    taps.push(NetworkTap {
                        source: TapSource::RailVss,
                        conductance: pad / r_unit,
                    });
                }
            }
            taps.push(NetworkTap {
                source: TapSource::ClampTerminal(i),
                conductance: 1.0 / (opts.clamp_ratio * r_unit),
            });
            taps
        })
        .collect();
    Ok(CouplingNetwork {
        inputs,
        v_dd: cfg.v_dd,
        v_ss: cfg.v_ss,
    })
}

/// Inverts [`ising_to_network`]. The result is symmetric only if the network
/// is; clamp taps and balanced rail padding carry no Ising content.
pub fn network_to_ising(net: &CouplingNetwork, r_unit: f64) -> Result<IsingSpec> {
    if !(r_unit > 0.0) {
        return Err(invalid("r_unit must be positive"));
    }
    net.validate()?;
    let n = net.n();
    let mut spec = IsingSpec::zeros(n);
    for (i, taps) in net.inputs.iter().enumerate() {
        let mut to_vss = 0.0;
        let mut to_vdd = 0.0;
        for t in taps {
            let w = t.conductance * r_unit;
            match t.source {
                TapSource::OutputQbar(j) => spec.j[i][j] += w,
                TapSource::OutputQ(j) => spec.j[i][j] -= w,
                TapSource::RailVss => to_vss += w,
                TapSource::RailVdd => to_vdd += w,
                TapSource::ClampTerminal(_) => {}
            }
        }
        spec.h[i] = to_vss - to_vdd;
    }
    Ok(spec)
}
