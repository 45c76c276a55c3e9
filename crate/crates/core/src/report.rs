//! CSV emission of experiment results. Floats are written in Rust's
//! shortest round-trip form, so identical results give identical bytes.

use std::io::Write;

use crate::behavioral::{IsingSpec, SpinState};
use crate::error::Result;
use crate::experiments::{
    OracleReport, RampTest, SenseHistogram, Stabilization, StepResponse, TransferCurve,
};
use crate::stats::{code_label, StateHistogram};
use crate::synthesis::GroundStateReport;

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn write_transfer<W: Write>(t: &TransferCurve, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t_c_s", "v_in", "mean_logic_out"])?;
    for r in &t.rows {
        out.write_record([
            r.t_c.to_string(),
            r.v_in.to_string(),
            r.mean_logic_out.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Logistic and tanh fits per filter constant.
pub fn write_transfer_fits<W: Write>(t: &TransferCurve, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record([
        "t_c_s",
        "logistic_k",
        "logistic_x0",
        "logistic_r2",
        "tanh_r2",
        "max_rise",
    ])?;
    for t_c in t.t_c_values() {
        let l = t.fit_logistic(t_c)?;
        let h = t.fit_tanh(t_c)?;
        out.write_record([
            t_c.to_string(),
            l.params[0].to_string(),
            l.params[1].to_string(),
            l.r_squared.to_string(),
            h.r_squared.to_string(),
            t.max_rise(t_c).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sense_histograms<W: Write>(hs: &[SenseHistogram], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t_c_s", "bin", "v_center", "count", "relative"])?;
    for h in hs {
        let rel = h.histogram.relative();
        for (i, &c) in h.histogram.counts.iter().enumerate() {
            out.write_record([
                h.t_c.to_string(),
                i.to_string(),
                h.histogram.bin_center(i).to_string(),
                c.to_string(),
                rel[i].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_sense_summary<W: Write>(hs: &[SenseHistogram], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t_c_s", "rail_mass", "modes", "single_interior_mode"])?;
    for h in hs {
        let modes: Vec<String> = h.modes().iter().map(|m| m.to_string()).collect();
        out.write_record([
            h.t_c.to_string(),
            h.rail_mass().to_string(),
            modes.join(" "),
            h.has_single_interior_mode().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_step_latencies<W: Write>(s: &StepResponse, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["capture", "latency_s", "censored"])?;
    for (i, l) in s.latencies.iter().enumerate() {
        out.write_record([i.to_string(), opt(*l), l.is_none().to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_step_summary<W: Write>(s: &StepResponse, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["captures", "censored", "min_s", "median_s", "p95_s"])?;
    out.write_record([
        s.latencies.len().to_string(),
        s.censored.to_string(),
        opt(s.min),
        opt(s.median),
        opt(s.p95),
    ])?;
    out.flush()?;
    Ok(())
}

pub fn write_step_overlay<W: Write>(s: &StepResponse, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["capture", "time_s", "v_in", "v_out"])?;
    for r in &s.overlay {
        out.write_record([
            r.capture.to_string(),
            r.time.to_string(),
            r.v_in.to_string(),
            r.v_out.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ramp<W: Write>(r: &RampTest, names: &[&str], w: W) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["time_s".to_string(), "v_in".to_string()];
    header.extend(names.iter().map(|n| format!("v_out_{n}")));
    header.extend(names.iter().map(|n| format!("window_mean_{n}")));
    out.write_record(&header)?;
    for row in &r.rows {
        let mut rec = vec![row.time.to_string(), row.v_in.to_string()];
        rec.extend(row.v_out.iter().map(|v| v.to_string()));
        rec.extend(row.window_mean.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Measured histogram next to its oracle distribution.
pub fn write_state_histogram<W: Write>(
    h: &StateHistogram,
    oracle: Option<&[f64]>,
    w: W,
) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["code", "count", "frequency", "legal", "oracle"])?;
    let f = h.frequencies();
    for (c, &count) in h.counts().iter().enumerate() {
        let legal = h.legality().map_or(String::new(), |l| l[c].to_string());
        out.write_record([
            h.label(c),
            count.to_string(),
            f[c].to_string(),
            legal,
            oracle.map_or(String::new(), |p| p[c].to_string()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_stabilization_windows<W: Write>(s: &Stabilization, w: W) -> Result<()> {
    let mut out = writer(w);
    let n = s.stationary.n();
    let mut header = vec![
        "window_s".to_string(),
        "samples".to_string(),
        "tv_to_stationary".to_string(),
    ];
    header.extend((0..1usize << n).map(|c| format!("f_{}", code_label(c, n))));
    out.write_record(&header)?;
    for r in &s.windows {
        let mut rec = vec![
            r.window.to_string(),
            r.histogram.samples().to_string(),
            r.tv_to_stationary.to_string(),
        ];
        rec.extend(r.histogram.frequencies().iter().map(|f| f.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_stabilization_sliding<W: Write>(s: &Stabilization, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["time_after_flip_s", "freq_ab_11"])?;
    for (t, f) in &s.sliding {
        out.write_record([t.to_string(), f.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_oracle<W: Write>(
    spec: &IsingSpec,
    legal: &[usize],
    r: &OracleReport,
    w: W,
) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["clamps", "code", "energy", "legal", "probability"])?;
    let n = spec.n();
    for (c, p) in r.distribution.iter().enumerate() {
        out.write_record([
            r.clamps.clone(),
            code_label(c, n),
            spec.energy(&SpinState::from_code(c, n)).to_string(),
            legal.contains(&c).to_string(),
            p.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ground_report<W: Write>(r: &GroundStateReport, n: usize, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["code", "energy", "legal"])?;
    for &(c, e, legal) in &r.energies {
        out.write_record([code_label(c, n), e.to_string(), legal.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
