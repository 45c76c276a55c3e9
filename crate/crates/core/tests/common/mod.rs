//! Statistical checks shared by the integration test targets.

#![allow(dead_code)]

use psl_core::mtj::{self, MtjState};
use psl_core::rng::stream;
use psl_core::stats::{ks_test, KsResult};

pub const DT: f64 = 1e-9;

/// Runs a bare telegraph process until each state has completed at least
/// `min_dwells` dwells; returns the dwell durations `(in P, in AP)`.
pub fn collect_dwells(tau_p: f64, tau_ap: f64, min_dwells: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = stream(seed, 0);
    let p_p = mtj::flip_probability(DT, tau_p);
    let p_ap = mtj::flip_probability(DT, tau_ap);
    let mut state = MtjState::P;
    let (mut in_p, mut in_ap) = (Vec::new(), Vec::new());
    let mut run = 0u64;
    // The first dwell is dropped since it starts at an arbitrary time.
    let mut first = true;
    while in_p.len() < min_dwells || in_ap.len() < min_dwells {
        let p = if state == MtjState::P { p_p } else { p_ap };
        let next = mtj::step_with_probability(state, p, &mut rng);
        run += 1;
        if next != state {
            if !first {
                let d = run as f64 * DT;
                if state == MtjState::P { in_p.push(d) } else { in_ap.push(d) }
            }
            first = false;
            run = 0;
            state = next;
        }
    }
    (in_p, in_ap)
}

pub fn ks_exponential(samples: &[f64], mean: f64) -> KsResult {
    ks_test(samples, |x| 1.0 - (-x / mean).exp())
}

/// Fraction of decorrelated samples (one every `spacing` seconds) taken in
/// the P state.
pub fn occupancy_p(tau_p: f64, tau_ap: f64, samples: usize, spacing: f64, seed: u64) -> f64 {
    let mut rng = stream(seed, 1);
    let p_p = mtj::flip_probability(DT, tau_p);
    let p_ap = mtj::flip_probability(DT, tau_ap);
    let every = (spacing / DT).round() as u64;
    let mut state = if seed % 2 == 0 { MtjState::P } else { MtjState::AP };
    let mut hits = 0usize;
    for _ in 0..samples {
        for _ in 0..every {
            let p = if state == MtjState::P { p_p } else { p_ap };
            state = mtj::step_with_probability(state, p, &mut rng);
        }
        hits += usize::from(state == MtjState::P);
    }
    hits as f64 / samples as f64
}

/// Half-width of the normal-approximation binomial interval at `z` sigmas.
pub fn binomial_half_width(p: f64, n: usize, z: f64) -> f64 {
    z * (p * (1.0 - p) / n as f64).sqrt()
}
