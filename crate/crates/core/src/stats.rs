//! Histograms, distances, curve fits and goodness-of-fit tests used by the
//! experiments.

use serde::Serialize;

use crate::error::{invalid, Result};

/// Counts over the `2^n` logic codes of an `n`-node circuit, optionally
/// tagged with legality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateHistogram {
    n: usize,
    counts: Vec<u64>,
    legal: Option<Vec<bool>>,
}

impl StateHistogram {
    pub fn empty(n: usize) -> Self {
        StateHistogram {
            n,
            counts: vec![0; 1 << n],
            legal: None,
        }
    }

    pub fn from_counts(n: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != 1 << n {
            return Err(invalid("histogram count vector must have 2^n entries"));
        }
        Ok(StateHistogram {
            n,
            counts,
            legal: None,
        })
    }

    #[inline]
    pub fn record(&mut self, code: usize) {
        self.counts[code] += 1;
    }

    pub fn record_many(&mut self, code: usize, times: u64) {
        self.counts[code] += times;
    }

    pub fn merge(&mut self, other: &StateHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.samples();
        if total == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts
            .iter()
            .map(|&c| c as f64 / total as f64)
            .collect()
    }

    /// Tags every code with legality. Tags depend only on `legal_codes`.
    pub fn with_legality(mut self, legal_codes: &[usize]) -> Self {
        let mut tags = vec![false; self.counts.len()];
        for &c in legal_codes {
            if c < tags.len() {
                tags[c] = true;
            }
        }
        self.legal = Some(tags);
        self
    }

    pub fn legality(&self) -> Option<&[bool]> {
        self.legal.as_deref()
    }

    pub fn label(&self, code: usize) -> String {
        code_label(code, self.n)
    }

    /// Frequency of logic '1' at `node` (0 = most significant).
    pub fn marginal_one(&self, node: usize) -> f64 {
        let bit = 1 << (self.n - 1 - node);
        self.frequencies()
            .iter()
            .enumerate()
            .filter(|(c, _)| c & bit != 0)
            .map(|(_, f)| f)
            .sum()
    }

    pub fn modal_code(&self) -> usize {
        argmax(&self.frequencies())
    }
}

pub fn code_label(code: usize, n: usize) -> String {
    (0..n)
        .map(|i| {
            if code >> (n - 1 - i) & 1 == 1 {
                '1'
            } else {
                '0'
            }
        })
        .collect()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Codes whose probability is within `tol` of the maximum.
pub fn modal_set(p: &[f64], tol: f64) -> Vec<usize> {
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..p.len()).filter(|&i| p[i] >= max - tol).collect()
}

/// Total variation distance `½ Σ |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must have the same support");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Fixed-width histogram over `[lo, hi]`; the top edge is inclusive and
/// out-of-range values are clipped into the end bins.
#[derive(Debug, Clone, Serialize)]
pub struct BinnedHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl BinnedHistogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo) || bins < 3 {
            return Err(invalid("histogram needs hi > lo and at least 3 bins"));
        }
        Ok(BinnedHistogram {
            lo,
            hi,
            counts: vec![0; bins],
        })
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let bins = self.counts.len();
        let pos = (x - self.lo) / (self.hi - self.lo) * bins as f64;
        let idx = if pos <= 0.0 {
            0
        } else {
            (pos as usize).min(bins - 1)
        };
        self.counts[idx] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn relative(&self) -> Vec<f64> {
        let t = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        self.lo + (i as f64 + 0.5) * w
    }

    /// Mass in the first and last bins, where the two unfiltered levels land.
    pub fn rail_mass(&self) -> f64 {
        let r = self.relative();
        r[0] + r[r.len() - 1]
    }
}

/// Indices of peaks whose topographic prominence is at least
/// `min_prominence` times the tallest value.
pub fn prominent_peaks(values: &[f64], min_prominence: f64) -> Vec<usize> {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let n = values.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        // Collapse plateaus to their first index.
        let mut j = i;
        while j + 1 < n && values[j + 1] == values[i] {
            j += 1;
        }
        let left_ok = i == 0 || values[i - 1] < values[i];
        let right_ok = j + 1 == n || values[j + 1] < values[i];
        if left_ok && right_ok {
            let h = values[i];
            // Lowest point on each side before the terrain rises above h; a
            // peak on the edge has no base on that side.
            let left_base = (i > 0).then(|| {
                values[..i]
                    .iter()
                    .rev()
                    .take_while(|&&v| v <= h)
                    .copied()
                    .fold(h, f64::min)
            });
            let right_base = (j + 1 < n).then(|| {
                values[j + 1..]
                    .iter()
                    .take_while(|&&v| v <= h)
                    .copied()
                    .fold(h, f64::min)
            });
            let base = match (left_base, right_base) {
                (Some(l), Some(r)) => l.max(r),
                (Some(b), None) | (None, Some(b)) => b,
                (None, None) => 0.0,
            };
            if h - base >= min_prominence * max {
                peaks.push(i);
            }
        }
        i = j + 1;
    }
    peaks
}

/// Centered moving average with a window of `2*half+1` bins.
pub fn smooth(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Result of a least-squares curve fit.
#[derive(Debug, Clone, Serialize)]
pub struct CurveFit {
    pub params: Vec<f64>,
    pub r_squared: f64,
}

/// Decreasing logistic `1 / (1 + exp(k (x - x0)))`; params `[k, x0]`.
pub fn logistic(x: f64, p: &[f64]) -> f64 {
    1.0 / (1.0 + (p[0] * (x - p[1])).exp())
}

/// Shifted and scaled tanh `c + d·tanh(k (x - x0))`; params `[c, d, k, x0]`.
pub fn scaled_tanh(x: f64, p: &[f64]) -> f64 {
    p[0] + p[1] * (p[2] * (x - p[3])).tanh()
}

fn initial_center_and_scale(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let y_mid = 0.5
        * (ys.iter().copied().fold(f64::INFINITY, f64::min)
            + ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let mut x0 = 0.5 * (xs[0] + xs[xs.len() - 1]);
    for w in 0..xs.len().saturating_sub(1) {
        if (ys[w] - y_mid) * (ys[w + 1] - y_mid) <= 0.0 && ys[w] != ys[w + 1] {
            x0 = xs[w] + (y_mid - ys[w]) / (ys[w + 1] - ys[w]) * (xs[w + 1] - xs[w]);
            break;
        }
    }
    let span = (xs[xs.len() - 1] - xs[0]).abs().max(f64::MIN_POSITIVE);
    (x0, span)
}

/// Fits [`logistic`] by least squares. The steepness is `params[0]`.
pub fn fit_logistic(xs: &[f64], ys: &[f64]) -> Result<CurveFit> {
    let (x0, span) = initial_center_and_scale(xs, ys);
    // Multi-start over the steepness to avoid the flat local minimum.
    let starts = [2.0, 8.0, 32.0, 128.0, 512.0];
    best_fit(
        xs,
        ys,
        logistic,
        starts.iter().map(|s| vec![s / span, x0]).collect(),
    )
}

/// Fits [`scaled_tanh`] by least squares.
pub fn fit_scaled_tanh(xs: &[f64], ys: &[f64]) -> Result<CurveFit> {
    let (x0, span) = initial_center_and_scale(xs, ys);
    let (lo, hi) = (
        ys.iter().copied().fold(f64::INFINITY, f64::min),
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let (c, d) = (0.5 * (lo + hi), -0.5 * (hi - lo));
    let starts = [2.0, 8.0, 32.0, 128.0, 512.0];
    best_fit(
        xs,
        ys,
        scaled_tanh,
        starts.iter().map(|s| vec![c, d, s / span, x0]).collect(),
    )
}

fn best_fit(
    xs: &[f64],
    ys: &[f64],
    f: fn(f64, &[f64]) -> f64,
    starts: Vec<Vec<f64>>,
) -> Result<CurveFit> {
    if xs.len() != ys.len() || xs.len() < starts[0].len() + 1 {
        return Err(invalid("not enough points to fit"));
    }
    let fits = starts
        .into_iter()
        .map(|p| levenberg_marquardt(xs, ys, f, p));
    let best = fits
        .min_by(|a, b| sse(xs, ys, f, a).total_cmp(&sse(xs, ys, f, b)))
        .expect("at least one start");
    Ok(CurveFit {
        r_squared: r_squared(xs, ys, f, &best),
        params: best,
    })
}

fn sse(xs: &[f64], ys: &[f64], f: fn(f64, &[f64]) -> f64, p: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| (y - f(x, p)).powi(2))
        .sum()
}

pub fn r_squared(xs: &[f64], ys: &[f64], f: fn(f64, &[f64]) -> f64, p: &[f64]) -> f64 {
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return 1.0;
    }
    1.0 - sse(xs, ys, f, p) / ss_tot
}

fn levenberg_marquardt(
    xs: &[f64],
    ys: &[f64],
    f: fn(f64, &[f64]) -> f64,
    mut p: Vec<f64>,
) -> Vec<f64> {
    let np = p.len();
    let mut lambda = 1e-3;
    let mut cost = sse(xs, ys, f, &p);
    for _ in 0..500 {
        // Forward-difference Jacobian.
        let mut jt_j = vec![vec![0.0; np]; np];
        let mut jt_r = vec![0.0; np];
        for (&x, &y) in xs.iter().zip(ys) {
            let f0 = f(x, &p);
            let mut grad = vec![0.0; np];
            for k in 0..np {
                let h = 1e-7 * p[k].abs().max(1e-7);
                let mut q = p.clone();
                q[k] += h;
                grad[k] = (f(x, &q) - f0) / h;
            }
            for a in 0..np {
                jt_r[a] += grad[a] * (y - f0);
                for b in 0..np {
                    jt_j[a][b] += grad[a] * grad[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jt_j.clone();
            for a in 0..np {
                m[a][a] += lambda * jt_j[a][a].max(1e-12);
            }
            let Some(delta) = solve(m, jt_r.clone()) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let c = sse(xs, ys, f, &trial);
            if c.is_finite() && c < cost {
                let rel = (cost - c) / cost.max(1e-300);
                p = trial;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    p
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// One-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    }
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = sign * (-2.0 * (j as f64 * lambda).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_examples() {
        let p = [0.25, 0.25, 0.5];
        assert_eq!(tv_distance(&p, &p), 0.0);
        assert!((tv_distance(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn histogram_bookkeeping() {
        let mut h = StateHistogram::empty(3);
        h.record(0b111);
        h.record(0b111);
        h.record(0b010);
        h.record_many(0b000, 1);
        let f = h.frequencies();
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(h.samples(), 4);
        assert_eq!(h.modal_code(), 0b111);
        assert!((h.marginal_one(0) - 0.5).abs() < 1e-15);
        assert!((h.marginal_one(1) - 0.75).abs() < 1e-15);
        assert_eq!(h.label(0b011), "011");
        let tagged = h.with_legality(&[0, 2, 4, 7]);
        assert_eq!(
            tagged.legality().unwrap(),
            &[true, false, true, false, true, false, false, true]
        );
    }

    #[test]
    fn binned_histogram_edges() {
        let mut b = BinnedHistogram::new(0.0, 1.0, 4).unwrap();
        for x in [0.0, 1.0, -0.5, 1.5, 0.3] {
            b.add(x);
        }
        assert_eq!(b.counts, vec![2, 1, 0, 2]);
        assert!((b.rail_mass() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn peak_counting() {
        let single = [0.0, 1.0, 3.0, 5.0, 3.0, 1.0, 0.0];
        assert_eq!(prominent_peaks(&single, 0.1), vec![3]);
        let double = [5.0, 1.0, 0.0, 0.0, 1.0, 5.0];
        assert_eq!(prominent_peaks(&double, 0.1).len(), 2);
        let noisy = [0.0, 2.0, 4.0, 3.9, 4.05, 2.0, 0.0];
        assert_eq!(prominent_peaks(&noisy, 0.1).len(), 1);
        let flat = [1.0; 5];
        assert_eq!(prominent_peaks(&flat, 0.1), vec![0]);
    }

    #[test]
    fn logistic_fit_recovers_parameters() {
        let xs: Vec<f64> = (0..41).map(|i| -1.0 + 0.05 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| logistic(x, &[7.0, 0.2])).collect();
        let fit = fit_logistic(&xs, &ys).unwrap();
        assert!((fit.params[0] - 7.0).abs() < 1e-4, "{:?}", fit.params);
        assert!((fit.params[1] - 0.2).abs() < 1e-5);
        assert!(fit.r_squared > 0.999_999);
    }

    #[test]
    fn tanh_fit_recovers_parameters() {
        let xs: Vec<f64> = (0..41).map(|i| -1.0 + 0.05 * i as f64).collect();
        let truth = [0.5, -0.45, 3.0, -0.1];
        let ys: Vec<f64> = xs.iter().map(|&x| scaled_tanh(x, &truth)).collect();
        let fit = fit_scaled_tanh(&xs, &ys).unwrap();
        assert!(fit.r_squared > 0.999_999, "{:?}", fit);
    }

    #[test]
    fn ks_accepts_matching_and_rejects_wrong_distribution() {
        // Deterministic quantiles of Exp(1) are a perfect sample.
        let n = 2000;
        let xs: Vec<f64> = (0..n)
            .map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln())
            .collect();
        let good = ks_test(&xs, |x| 1.0 - (-x).exp());
        assert!(good.p_value > 0.99, "{good:?}");
        let bad = ks_test(&xs, |x| 1.0 - (-x / 1.3).exp());
        assert!(bad.p_value < 1e-6, "{bad:?}");
    }
}
