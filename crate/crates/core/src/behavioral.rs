//! Idealized p-bit network: binary stochastic neurons, sequential Gibbs
//! sampling with clamps, and exact Boltzmann enumeration.
//!
//! Spins are `±1`; logic '1' is `+1`. Codes put node 0 in the most
//! significant bit, so for the AND gate the code reads `[ABC]`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::stats::StateHistogram;

/// Largest network the enumeration oracle accepts.
pub const MAX_ENUMERATION_NODES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsingSpec {
    /// Symmetric couplings with zero diagonal.
    pub j: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    /// Input gain.
    #[serde(default = "one")]
    pub i0: f64,
    /// Inverse temperature.
    #[serde(default = "one")]
    pub beta: f64,
}

fn one() -> f64 {
    1.0
}

impl IsingSpec {
    pub fn new(j: Vec<Vec<f64>>, h: Vec<f64>) -> Result<Self> {
        let spec = IsingSpec {
            j,
            h,
            i0: 1.0,
            beta: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zeros(n: usize) -> Self {
        IsingSpec {
            j: vec![vec![0.0; n]; n],
            h: vec![0.0; n],
            i0: 1.0,
            beta: 1.0,
        }
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    /// Overall sharpness `beta * i0` of the stationary distribution.
    pub fn effective_beta(&self) -> f64 {
        self.beta * self.i0
    }

    pub fn with_effective_beta(&self, beta_eff: f64) -> Self {
        IsingSpec {
            i0: 1.0,
            beta: beta_eff,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(invalid("ising spec needs at least one node"));
        }
        if self.j.len() != n || self.j.iter().any(|row| row.len() != n) {
            return Err(invalid("coupling matrix must be n x n"));
        }
        for i in 0..n {
            if self.j[i][i] != 0.0 {
                return Err(invalid(format!(
                    "coupling diagonal J[{i}][{i}] must be zero"
                )));
            }
            for k in 0..i {
                if self.j[i][k] != self.j[k][i] {
                    return Err(invalid(format!(
                        "coupling matrix not symmetric at ({i},{k})"
                    )));
                }
            }
        }
        let finite = self
            .j
            .iter()
            .flatten()
            .chain(self.h.iter())
            .all(|x| x.is_finite());
        if !finite
            || !self.beta.is_finite()
            || !self.i0.is_finite()
            || self.beta < 0.0
            || self.i0 < 0.0
        {
            return Err(invalid(
                "ising spec values must be finite, beta and i0 non-negative",
            ));
        }
        Ok(())
    }

    /// `E(m) = -Σ_{i<j} J_ij m_i m_j - Σ_i h_i m_i`
    pub fn energy(&self, m: &SpinState) -> f64 {
        let s = &m.0;
        let mut e = 0.0;
        for i in 0..s.len() {
            e -= self.h[i] * s[i] as f64;
            for k in (i + 1)..s.len() {
                e -= self.j[i][k] * (s[i] * s[k]) as f64;
            }
        }
        e
    }
}

/// Spin configuration, entries `±1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinState(pub Vec<i8>);

impl SpinState {
    pub fn from_code(code: usize, n: usize) -> Self {
        SpinState(
            (0..n)
                .map(|i| if code >> (n - 1 - i) & 1 == 1 { 1 } else { -1 })
                .collect(),
        )
    }

    pub fn code(&self) -> usize {
        self.0
            .iter()
            .fold(0, |acc, &s| (acc << 1) | usize::from(s > 0))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }
}

/// Clamp status of one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Clamp {
    Free,
    /// Pinned to logic '0' (spin −1).
    Clamp0,
    /// Pinned to logic '1' (spin +1).
    Clamp1,
}

impl Clamp {
    pub fn spin(self) -> Option<i8> {
        match self {
            Clamp::Free => None,
            Clamp::Clamp0 => Some(-1),
            Clamp::Clamp1 => Some(1),
        }
    }

    /// Parses the CLI notation `0`, `1` or `n`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "0" => Ok(Clamp::Clamp0),
            "1" => Ok(Clamp::Clamp1),
            "n" | "N" => Ok(Clamp::Free),
            other => Err(invalid(format!(
                "clamp level must be 0, 1 or n, got '{other}'"
            ))),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Clamp::Free => 'n',
            Clamp::Clamp0 => '0',
            Clamp::Clamp1 => '1',
        }
    }

    pub fn complement(self) -> Self {
        match self {
            Clamp::Free => Clamp::Free,
            Clamp::Clamp0 => Clamp::Clamp1,
            Clamp::Clamp1 => Clamp::Clamp0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClampSpec(pub Vec<Clamp>);

impl ClampSpec {
    pub fn free(n: usize) -> Self {
        ClampSpec(vec![Clamp::Free; n])
    }

    /// Parses a compact assignment such as `"0n1"`, one symbol per node.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| Clamp::parse(&c.to_string()))
            .collect::<Result<Vec<_>>>()
            .map(ClampSpec)
    }

    pub fn label(&self) -> String {
        self.0.iter().map(|c| c.symbol()).collect()
    }

    pub fn complement(&self) -> Self {
        ClampSpec(self.0.iter().map(|c| c.complement()).collect())
    }

    /// True if `m` agrees with every clamped node.
    pub fn admits(&self, m: &SpinState) -> bool {
        self.0
            .iter()
            .zip(&m.0)
            .all(|(c, &s)| c.spin().is_none_or(|v| v == s))
    }
}

/// `I_i = h_i + Σ_j J_ij m_j`
pub fn local_field(i: usize, m: &SpinState, spec: &IsingSpec) -> f64 {
    spec.h[i]
        + spec.j[i]
            .iter()
            .zip(&m.0)
            .map(|(&jij, &s)| jij * s as f64)
            .sum::<f64>()
}

/// Probability that node `i` is resampled to `+1`.
pub fn pbit_probability(i: usize, m: &SpinState, spec: &IsingSpec) -> f64 {
    0.5 * (1.0 + (spec.effective_beta() * local_field(i, m, spec)).tanh())
}

/// Resamples free node `i` from its conditional. One uniform draw.
pub fn pbit_update<R: Rng + ?Sized>(
    i: usize,
    m: &mut SpinState,
    spec: &IsingSpec,
    clamps: &ClampSpec,
    rng: &mut R,
) -> Result<()> {
    if clamps.0.get(i).copied() != Some(Clamp::Free) {
        return Err(invalid(format!("node {i} is clamped or out of range")));
    }
    let p = pbit_probability(i, m, spec);
    let u: f64 = rng.random();
    m.0[i] = if u < p { 1 } else { -1 };
    Ok(())
}

/// Sequential Gibbs sampling: each sweep visits the free nodes in a fresh
/// random order; the state is recorded after every sweep.
pub fn gibbs_sample<R: Rng + ?Sized>(
    spec: &IsingSpec,
    clamps: &ClampSpec,
    sweeps: u64,
    rng: &mut R,
) -> Result<StateHistogram> {
    spec.validate()?;
    let n = spec.n();
    if clamps.0.len() != n {
        return Err(invalid("clamp spec length does not match node count"));
    }
    if sweeps == 0 {
        return Err(invalid("sweeps must be at least 1"));
    }
    let mut m = SpinState(
        clamps
            .0
            .iter()
            .map(|c| {
                c.spin()
                    .unwrap_or_else(|| if rng.random::<bool>() { 1 } else { -1 })
            })
            .collect(),
    );
    let mut order: Vec<usize> = (0..n).filter(|&i| clamps.0[i] == Clamp::Free).collect();
    let mut hist = StateHistogram::empty(n);
    if order.is_empty() {
        hist.record_many(m.code(), sweeps);
        return Ok(hist);
    }
    for _ in 0..sweeps {
        order.shuffle(rng);
        for &i in &order {
            pbit_update(i, &mut m, spec, clamps, rng)?;
        }
        hist.record(m.code());
    }
    Ok(hist)
}

/// Exact clamp-conditioned Boltzmann distribution over all `2^n` codes, with
/// `P(m) ∝ exp(-beta·i0·E(m))`.
pub fn boltzmann_oracle(spec: &IsingSpec, clamps: &ClampSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.n();
    if n > MAX_ENUMERATION_NODES {
        return Err(invalid(format!(
            "enumeration limited to {MAX_ENUMERATION_NODES} nodes, got {n}"
        )));
    }
    if clamps.0.len() != n {
        return Err(invalid("clamp spec length does not match node count"));
    }
    let beta = spec.effective_beta();
    let energies: Vec<Option<f64>> = (0..1usize << n)
        .map(|code| {
            let m = SpinState::from_code(code, n);
            clamps.admits(&m).then(|| spec.energy(&m))
        })
        .collect();
    let e_min = energies
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies
        .iter()
        .map(|e| e.map_or(0.0, |e| (-beta * (e - e_min)).exp()))
        .collect();
    let z: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::synthesis::and_gate_spec;

    #[test]
    fn codes_round_trip() {
        for code in 0..8 {
            assert_eq!(SpinState::from_code(code, 3).code(), code);
        }
        assert_eq!(SpinState::from_code(0b100, 3).0, vec![1, -1, -1]);
    }

    #[test]
    fn local_field_examples() {
        let mut spec = IsingSpec::zeros(3);
        spec.h[1] = 0.5;
        assert_eq!(local_field(1, &SpinState(vec![1, -1, 1]), &spec), 0.5);
        assert_eq!(local_field(1, &SpinState(vec![-1, 1, -1]), &spec), 0.5);

        let spec = IsingSpec::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(local_field(0, &SpinState(vec![-1, 1]), &spec), 1.0);

        let and = and_gate_spec();
        assert_eq!(local_field(2, &SpinState(vec![1, 1, 1]), &and), 2.0);
    }

    #[test]
    fn pbit_probability_limits() {
        let spec = IsingSpec::zeros(1);
        assert_eq!(pbit_probability(0, &SpinState(vec![1]), &spec), 0.5);
        let mut strong = IsingSpec::zeros(1);
        strong.h[0] = 1e3;
        let mut r = rng::stream(1, 0);
        let mut m = SpinState(vec![-1]);
        for _ in 0..1000 {
            pbit_update(0, &mut m, &strong, &ClampSpec::free(1), &mut r).unwrap();
            assert_eq!(m.0[0], 1);
        }
    }

    #[test]
    fn pbit_mean_matches_tanh() {
        let mut spec = IsingSpec::zeros(1);
        spec.h[0] = 1.0;
        let clamps = ClampSpec::free(1);
        let mut r = rng::stream(11, 0);
        let mut m = SpinState(vec![1]);
        let n = 1_000_000;
        let sum: i64 = (0..n)
            .map(|_| {
                pbit_update(0, &mut m, &spec, &clamps, &mut r).unwrap();
                m.0[0] as i64
            })
            .sum();
        let mean = sum as f64 / n as f64;
        let expected = 1f64.tanh();
        let sigma = ((1.0 - expected * expected) / n as f64).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * sigma,
            "mean {mean} vs {expected}"
        );
    }

    #[test]
    fn updating_clamped_node_is_rejected() {
        let spec = IsingSpec::zeros(2);
        let clamps = ClampSpec(vec![Clamp::Clamp1, Clamp::Free]);
        let mut m = SpinState(vec![1, 1]);
        let mut r = rng::stream(1, 0);
        assert!(pbit_update(0, &mut m, &spec, &clamps, &mut r).is_err());
        assert!(pbit_update(1, &mut m, &spec, &clamps, &mut r).is_ok());
    }

    #[test]
    fn fair_coin() {
        let mut r = rng::stream(2, 0);
        let hist =
            gibbs_sample(&IsingSpec::zeros(1), &ClampSpec::free(1), 200_000, &mut r).unwrap();
        let f = hist.frequencies();
        assert!((f[0] - 0.5).abs() < 3.0 * (0.25f64 / 200_000.0).sqrt());
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_clamped_gives_forced_state() {
        let spec = and_gate_spec();
        let clamps = ClampSpec::parse("101").unwrap();
        let hist = gibbs_sample(&spec, &clamps, 10, &mut rng::stream(0, 0)).unwrap();
        assert_eq!(hist.frequencies()[0b101], 1.0);
        assert_eq!(hist.samples(), 10);
    }

    #[test]
    fn zero_sweeps_rejected() {
        let r = gibbs_sample(
            &IsingSpec::zeros(1),
            &ClampSpec::free(1),
            0,
            &mut rng::stream(0, 0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn clamped_nodes_never_move() {
        let spec = and_gate_spec();
        let clamps = ClampSpec::parse("n0n").unwrap();
        let hist = gibbs_sample(&spec, &clamps, 20_000, &mut rng::stream(9, 0)).unwrap();
        for (code, &c) in hist.counts().iter().enumerate() {
            if code & 0b010 != 0 {
                assert_eq!(c, 0);
            }
        }
    }

    #[test]
    fn oracle_single_node_and_limits() {
        let p = boltzmann_oracle(&IsingSpec::zeros(1), &ClampSpec::free(1)).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        let big = IsingSpec::zeros(21);
        assert!(boltzmann_oracle(&big, &ClampSpec::free(21)).is_err());
    }

    #[test]
    fn oracle_and_gate_values() {
        // Legal energy -3, three illegal at +1, logic 001 at +9:
        // Z = 4 + 3e^-4 + e^-12.
        let p = boltzmann_oracle(&and_gate_spec(), &ClampSpec::free(3)).unwrap();
        let z = 4.0 + 3.0 * (-4f64).exp() + (-12f64).exp();
        for code in [0b000, 0b010, 0b100, 0b111] {
            assert!((p[code] - 1.0 / z).abs() < 1e-12);
            assert!((p[code] - 0.2466).abs() < 1e-4);
        }
        for code in [0b011, 0b101, 0b110] {
            assert!((p[code] - (-4f64).exp() / z).abs() < 1e-12);
            assert!((p[code] - 0.00452).abs() < 1e-5);
        }
        assert!((p[0b001] - 1.5e-6).abs() < 0.05e-6);

        let c1 = boltzmann_oracle(&and_gate_spec(), &ClampSpec::parse("nn1").unwrap()).unwrap();
        assert!((c1[0b111] - 0.9647).abs() < 1e-4);
        assert_eq!(c1[0b110], 0.0);
    }

    #[test]
    fn oracle_flip_symmetry() {
        let spec = and_gate_spec();
        let mut neg = spec.clone();
        neg.h.iter_mut().for_each(|h| *h = -*h);
        let clamps = ClampSpec::parse("1nn").unwrap();
        let p = boltzmann_oracle(&spec, &clamps).unwrap();
        let q = boltzmann_oracle(&neg, &clamps.complement()).unwrap();
        for code in 0..8 {
            assert!((p[code] - q[7 - code]).abs() < 1e-15);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(IsingSpec::new(vec![vec![1.0]], vec![0.0]).is_err());
        assert!(IsingSpec::new(vec![vec![0.0, 1.0], vec![2.0, 0.0]], vec![0.0, 0.0]).is_err());
        assert!(IsingSpec::new(vec![], vec![]).is_err());
    }
}
