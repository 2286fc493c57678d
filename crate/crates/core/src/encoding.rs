//! Classical encodings of bits into quadrature values.
//!
//! Two encodings are supported. Periodic binning writes a value as
//! `x = (S + s̄)·spacing` and keeps the parity of `S` as the bit, the
//! fractional part `s̄` being announced publicly. The sliced encoding cuts the
//! real line into `2^m` equiprobable intervals and labels each with an
//! `m`-bit word whose bits `S_1 .. S_m` (least significant first) are
//! reconciled one after another.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, Error, Result};
use crate::math::{inverse_normal_cdf, normal_cdf, normal_interval_mass, normal_sf, GaussianDist};

/// Lattice pitch for one quadrature.
///
/// With an asymmetry parameter `α`, the x quadrature uses pitch `√π/α` and
/// the p quadrature `√π·α`; the yes/no effects used for error estimation
/// then have half-widths of half the pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicBinning {
    pub spacing: f64,
}

impl PeriodicBinning {
    pub fn new(spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return domain(format!("binning spacing must be positive, got {spacing}"));
        }
        Ok(PeriodicBinning { spacing })
    }

    /// Pitch `√π`.
    pub fn symmetric() -> Self {
        PeriodicBinning { spacing: PI.sqrt() }
    }

    /// `(x binning, p binning)` for asymmetry `α`.
    pub fn asymmetric(alpha: f64) -> Result<(Self, Self)> {
        if !(alpha > 0.0) {
            return domain(format!("asymmetry parameter must be positive, got {alpha}"));
        }
        Ok((
            PeriodicBinning::new(PI.sqrt() / alpha)?,
            PeriodicBinning::new(PI.sqrt() * alpha)?,
        ))
    }

    pub fn halfwidth(&self) -> f64 {
        0.5 * self.spacing
    }
}

/// Splits `x` into the integer part `S` and fraction `s̄ ∈ [0, 1)` with
/// `x = (S + s̄)·spacing`, using floor for negative values.
pub fn split_periodic(x: f64, b: &PeriodicBinning) -> (i64, f64) {
    let t = x / b.spacing;
    let s = t.floor();
    let mut sbar = t - s;
    let mut s = s as i64;
    if sbar >= 1.0 {
        s += 1;
        sbar = 0.0;
    }
    (s, sbar)
}

/// Parity of `s` (0 for even).
pub fn bit_from_integer(s: i64) -> u8 {
    s.rem_euclid(2) as u8
}

/// Bob's bit: parity of the lattice index nearest to `x' - s̄·spacing`,
/// exact ties going to the even index.
pub fn decode_periodic(x_received: f64, sbar: f64, b: &PeriodicBinning) -> u8 {
    let t = (x_received - sbar * b.spacing) / b.spacing;
    bit_from_integer(t.round_ties_even() as i64)
}

/// Order in which interval labels are assigned left to right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Labeling {
    Binary,
    Gray,
}

impl Labeling {
    pub fn label(self, k: usize) -> u32 {
        match self {
            Labeling::Binary => k as u32,
            Labeling::Gray => (k ^ (k >> 1)) as u32,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Labeling::Binary => "binary",
            Labeling::Gray => "gray",
        }
    }
}

impl std::str::FromStr for Labeling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Labeling::Binary),
            "gray" => Ok(Labeling::Gray),
            _ => Err(Error::Parse(format!("unknown labeling '{s}'"))),
        }
    }
}

/// How Bob estimates slice `i` given the already reconciled lower slices.
///
/// The two blind rules use only Bob's outcome. The remainder rules also use
/// the publicly revealed within-interval quantile of Alice's value, which
/// leaves one candidate value per interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeRule {
    /// Posterior-mass argmax over the consistent intervals.
    Map,
    /// Consistent interval closest to `y / gain`.
    NearestBoundary,
    /// Likelihood argmax over the per-interval candidates fixed by the remainder.
    RemainderMap,
    /// Candidate closest to `y / gain`.
    RemainderNearest,
}

impl DecodeRule {
    pub const ALL: [DecodeRule; 4] = [
        DecodeRule::Map,
        DecodeRule::NearestBoundary,
        DecodeRule::RemainderMap,
        DecodeRule::RemainderNearest,
    ];

    pub fn uses_remainder(self) -> bool {
        matches!(self, DecodeRule::RemainderMap | DecodeRule::RemainderNearest)
    }

    pub fn name(self) -> &'static str {
        match self {
            DecodeRule::Map => "map",
            DecodeRule::NearestBoundary => "nearest-boundary",
            DecodeRule::RemainderMap => "remainder-map",
            DecodeRule::RemainderNearest => "remainder-nearest",
        }
    }
}

impl std::str::FromStr for DecodeRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DecodeRule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown decode rule '{s}'")))
    }
}

/// Interval boundaries and labels of a sliced encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMap {
    pub m: usize,
    pub boundaries: Vec<f64>,
    pub labels: Vec<u32>,
    pub signal_sigma: f64,
    pub labeling: Labeling,
}

/// Within-interval quantile of a value, in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceRemainder(pub f64);

/// Builds `2^m` intervals of equal mass under `N(0, σ²)`.
pub fn build_equiprobable_slices(signal_sigma: f64, m: usize, labeling: Labeling) -> Result<SliceMap> {
    if !(1..=8).contains(&m) {
        return domain(format!("slice count must be in 1..=8, got {m}"));
    }
    if !(signal_sigma > 0.0) {
        return domain("signal sigma must be positive");
    }
    let n = 1usize << m;
    let boundaries = (1..n)
        .map(|k| inverse_normal_cdf(k as f64 / n as f64).map(|z| z * signal_sigma))
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..n).map(|k| labeling.label(k)).collect();
    Ok(SliceMap {
        m,
        boundaries,
        labels,
        signal_sigma,
        labeling,
    })
}

impl SliceMap {
    pub fn intervals(&self) -> usize {
        self.labels.len()
    }

    /// Index of the interval containing `x`; boundaries belong to the right.
    pub fn interval_of(&self, x: f64) -> usize {
        self.boundaries.partition_point(|&b| b <= x)
    }

    /// `(lo, hi)` of interval `k`, with infinite outer ends.
    pub fn interval_bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { f64::NEG_INFINITY } else { self.boundaries[k - 1] };
        let hi = if k + 1 == self.intervals() { f64::INFINITY } else { self.boundaries[k] };
        (lo, hi)
    }

    /// Bit `S_i` (1-based) of interval `k`.
    pub fn bit(&self, k: usize, i: usize) -> u8 {
        ((self.labels[k] >> (i - 1)) & 1) as u8
    }

    /// Intervals whose labels agree with `known_lower_bits` on `S_1 .. S_{i-1}`.
    pub fn consistent_intervals(&self, known_lower_bits: &[u8]) -> Vec<usize> {
        (0..self.intervals())
            .filter(|&k| {
                known_lower_bits
                    .iter()
                    .enumerate()
                    .all(|(j, &b)| self.bit(k, j + 1) == b)
            })
            .collect()
    }

    /// Prior mass of interval `k` under `N(0, signal_sigma²)`.
    pub fn prior_mass(&self, k: usize) -> f64 {
        let (lo, hi) = self.interval_bounds(k);
        normal_interval_mass(lo / self.signal_sigma, hi / self.signal_sigma)
    }

    /// The value with interval index `k` and remainder `q`.
    pub fn value_at(&self, k: usize, q: f64) -> Result<f64> {
        let n = self.intervals() as f64;
        let u = (k as f64 + q) / n;
        // for upper quantiles invert the tail to keep precision
        if u > 0.5 {
            let tail = (n - k as f64 - q) / n;
            Ok(-inverse_normal_cdf(tail)? * self.signal_sigma)
        } else {
            Ok(inverse_normal_cdf(u)? * self.signal_sigma)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("slice map serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let map: SliceMap = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if map.boundaries.len() + 1 != map.labels.len()
            || map.labels.len() != 1 << map.m
            || map.boundaries.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Parse("inconsistent slice map".into()));
        }
        Ok(map)
    }
}

/// Slice bits `(S_1, .., S_m)` of `x`, least significant first.
pub fn slice_bits(x: f64, s: &SliceMap) -> Vec<u8> {
    let k = s.interval_of(x);
    (1..=s.m).map(|i| s.bit(k, i)).collect()
}

/// Within-interval prior quantile of `x`.
pub fn slice_remainder(x: f64, s: &SliceMap) -> SliceRemainder {
    let n = s.intervals() as f64;
    let k = s.interval_of(x) as f64;
    let z = x / s.signal_sigma;
    let q = if z > 0.0 {
        (n - k) - normal_sf(z) * n
    } else {
        normal_cdf(z) * n - k
    };
    SliceRemainder(q.clamp(0.0, 1.0 - f64::EPSILON))
}

fn check_lower_bits(i: usize, known_lower_bits: &[u8], s: &SliceMap) -> Result<Vec<usize>> {
    if i == 0 || i > s.m {
        return domain(format!("slice index {i} outside 1..={}", s.m));
    }
    if known_lower_bits.len() != i - 1 {
        return Err(Error::LengthMismatch {
            expected: i - 1,
            got: known_lower_bits.len(),
        });
    }
    let cands = s.consistent_intervals(known_lower_bits);
    if cands.is_empty() {
        return domain("no interval is consistent with the known lower bits");
    }
    Ok(cands)
}

/// Parameters of the Gaussian posterior of `x` given Bob's outcome, for
/// prior `N(0, σ²)` and `y = gain·x + noise`.
fn posterior(y: f64, s: &SliceMap, noise: &GaussianDist, gain: f64) -> (f64, f64) {
    let prior_prec = 1.0 / (s.signal_sigma * s.signal_sigma);
    let prec = prior_prec + gain * gain / noise.variance;
    let mean = gain * (y - noise.mean) / noise.variance / prec;
    (mean, prec.recip().sqrt())
}

/// Posterior mass of each interval given Bob's outcome `y`.
pub fn interval_posterior(y: f64, s: &SliceMap, noise: &GaussianDist, gain: f64) -> Vec<f64> {
    let (mu, sd) = posterior(y, s, noise, gain);
    (0..s.intervals())
        .map(|k| {
            let (lo, hi) = s.interval_bounds(k);
            normal_interval_mass((lo - mu) / sd, (hi - mu) / sd)
        })
        .collect()
}

/// MAP estimate of `S_i` from Bob's outcome and the corrected lower bits.
///
/// Compares the posterior mass of the intervals consistent with the lower
/// bits and `S_i = b` for `b ∈ {0, 1}`. The per-interval integrals of prior
/// times likelihood have a closed form because the product is Gaussian in
/// `x`. Ties go to 0.
pub fn map_decode_slice(
    x_received: f64,
    i: usize,
    known_lower_bits: &[u8],
    s: &SliceMap,
    noise: &GaussianDist,
    gain: f64,
) -> Result<u8> {
    let cands = check_lower_bits(i, known_lower_bits, s)?;
    let post = interval_posterior(x_received, s, noise, gain);
    let mut w = [0.0f64; 2];
    for k in cands {
        w[s.bit(k, i) as usize] += post[k];
    }
    Ok((w[1] > w[0]) as u8)
}

/// Cheap alternative: bit of the consistent interval closest to `y / gain`.
pub fn nearest_decode_slice(
    x_received: f64,
    i: usize,
    known_lower_bits: &[u8],
    s: &SliceMap,
    noise: &GaussianDist,
    gain: f64,
) -> Result<u8> {
    let cands = check_lower_bits(i, known_lower_bits, s)?;
    let xh = (x_received - noise.mean) / gain;
    let dist = |k: usize| {
        let (lo, hi) = s.interval_bounds(k);
        if xh < lo {
            lo - xh
        } else if xh >= hi {
            xh - hi
        } else {
            0.0
        }
    };
    let best = cands
        .into_iter()
        .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
        .expect("non-empty candidates");
    Ok(s.bit(best, i))
}

/// Candidate values `σ·Φ⁻¹((k + q)/2^m)` of the intervals consistent with
/// the lower bits, each paired with its bit `S_i`.
pub fn remainder_candidates(
    i: usize,
    known_lower_bits: &[u8],
    remainder: SliceRemainder,
    s: &SliceMap,
) -> Result<Vec<(f64, u8)>> {
    let cands = check_lower_bits(i, known_lower_bits, s)?;
    let q = remainder.0;
    if !(0.0..1.0).contains(&q) {
        return domain(format!("remainder must lie in [0, 1), got {q}"));
    }
    // q = 0 puts the leftmost candidate at -∞; nudge it inside
    let q = q.max(1e-300);
    cands
        .into_iter()
        .map(|k| Ok((s.value_at(k, q)?, s.bit(k, i))))
        .collect()
}

/// Decision among precomputed candidates: summed likelihood when
/// `likelihood` is set, otherwise the closest candidate. Ties go to 0.
pub fn decide_from_candidates(y: f64, cands: &[(f64, u8)], noise: &GaussianDist, gain: f64, likelihood: bool) -> u8 {
    let y = y - noise.mean;
    if likelihood {
        let mut w = [f64::NEG_INFINITY; 2];
        for &(xk, b) in cands {
            let ll = -(y - gain * xk).powi(2) / (2.0 * noise.variance);
            w[b as usize] = log_add(w[b as usize], ll);
        }
        (w[1] > w[0]) as u8
    } else {
        let mut best = (f64::INFINITY, 0u8);
        for &(xk, b) in cands {
            let d = (y - gain * xk).abs();
            if d < best.0 || (d == best.0 && b < best.1) {
                best = (d, b);
            }
        }
        best.1
    }
}

/// Remainder-aware estimate: each consistent interval contributes the single
/// candidate value fixed by the revealed remainder.
#[allow(clippy::too_many_arguments)]
pub fn remainder_decode_slice(
    x_received: f64,
    i: usize,
    known_lower_bits: &[u8],
    remainder: SliceRemainder,
    s: &SliceMap,
    noise: &GaussianDist,
    gain: f64,
    likelihood: bool,
) -> Result<u8> {
    let cands = remainder_candidates(i, known_lower_bits, remainder, s)?;
    Ok(decide_from_candidates(x_received, &cands, noise, gain, likelihood))
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Dispatches on `rule`. The remainder is required for the remainder rules
/// and ignored otherwise.
#[allow(clippy::too_many_arguments)]
pub fn decode_slice(
    rule: DecodeRule,
    x_received: f64,
    i: usize,
    known_lower_bits: &[u8],
    remainder: Option<SliceRemainder>,
    s: &SliceMap,
    noise: &GaussianDist,
    gain: f64,
) -> Result<u8> {
    match rule {
        DecodeRule::Map => map_decode_slice(x_received, i, known_lower_bits, s, noise, gain),
        DecodeRule::NearestBoundary => nearest_decode_slice(x_received, i, known_lower_bits, s, noise, gain),
        DecodeRule::RemainderMap | DecodeRule::RemainderNearest => {
            let r = remainder.ok_or_else(|| Error::Domain("remainder rule needs the revealed remainder".into()))?;
            remainder_decode_slice(
                x_received,
                i,
                known_lower_bits,
                r,
                s,
                noise,
                gain,
                rule == DecodeRule::RemainderMap,
            )
        }
    }
}

/// Decodes all slices in order, feeding each corrected bit into the next
/// stage. `true_bits` plays the role of the reconciled lower slices.
#[allow(clippy::too_many_arguments)]
pub fn decode_all_slices(
    rule: DecodeRule,
    x_received: f64,
    true_bits: &[u8],
    remainder: Option<SliceRemainder>,
    s: &SliceMap,
    noise: &GaussianDist,
    gain: f64,
) -> Result<Vec<u8>> {
    (1..=s.m)
        .map(|i| decode_slice(rule, x_received, i, &true_bits[..i - 1], remainder, s, noise, gain))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::integrate;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SQPI: f64 = 1.772_453_850_905_516;

    #[test]
    fn split_examples() {
        let b = PeriodicBinning::symmetric();
        let (s, f) = split_periodic(2.5 * SQPI, &b);
        assert_eq!(s, 2);
        assert!((f - 0.5).abs() < 1e-15);
        let (s, f) = split_periodic(-0.25 * SQPI, &b);
        assert_eq!(s, -1);
        assert!((f - 0.75).abs() < 1e-15);
        assert_eq!(split_periodic(0.0, &b), (0, 0.0));
        assert_eq!(bit_from_integer(2), 0);
        assert_eq!(bit_from_integer(-1), 1);
        assert_eq!(bit_from_integer(0), 0);
    }

    #[test]
    fn split_reconstructs_within_ulps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1_000_000 {
            let spacing = rng.random_range(0.1..5.0);
            let x: f64 = rng.random_range(-50.0..50.0);
            let b = PeriodicBinning::new(spacing).unwrap();
            let (s, f) = split_periodic(x, &b);
            assert!((0.0..1.0).contains(&f));
            let back = (s as f64 + f) * spacing;
            assert!((back - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(spacing), "{x} {spacing}");
        }
    }

    #[test]
    fn decode_examples() {
        let b = PeriodicBinning::symmetric();
        assert_eq!(decode_periodic(2.5 * SQPI + 0.3, 0.5, &b), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-20.0..20.0);
            let (s, f) = split_periodic(x, &b);
            assert_eq!(decode_periodic(x, f, &b), bit_from_integer(s));
            assert_ne!(decode_periodic(x + b.spacing, f, &b), bit_from_integer(s));
        }
    }

    #[test]
    fn decode_period_two_lattice() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let b = PeriodicBinning::new(rng.random_range(0.5..3.0)).unwrap();
            let x: f64 = rng.random_range(-10.0..10.0);
            let sbar: f64 = rng.random_range(0.0..1.0);
            let k: i64 = rng.random_range(-20..20);
            let shifted = x + (2 * k) as f64 * b.spacing;
            // stay away from rounding ties introduced by the shift
            let t = (x - sbar * b.spacing) / b.spacing;
            if (t - t.floor() - 0.5).abs() < 1e-9 {
                continue;
            }
            assert_eq!(decode_periodic(shifted, sbar, &b), decode_periodic(x, sbar, &b));
        }
    }

    #[test]
    fn slice_builder_examples() {
        let s = build_equiprobable_slices(1.0, 1, Labeling::Binary).unwrap();
        assert_eq!(s.boundaries, vec![0.0]);
        let sig = 15.5f64.sqrt();
        let s = build_equiprobable_slices(sig, 2, Labeling::Binary).unwrap();
        assert!((s.boundaries[0] / sig + 0.674_489_75).abs() < 1e-7);
        assert_eq!(s.boundaries[1], 0.0);
        assert!((s.boundaries[2] / sig - 0.674_489_75).abs() < 1e-7);
        for k in 0..4 {
            assert!((s.prior_mass(k) - 0.25).abs() < 1e-9);
        }
        for m in 1..=8 {
            let s = build_equiprobable_slices(2.0, m, Labeling::Gray).unwrap();
            let n = 1 << m;
            assert_eq!(s.boundaries.len(), n - 1);
            assert!(s.boundaries.windows(2).all(|w| w[0] < w[1]));
            let mut l = s.labels.clone();
            l.sort();
            l.dedup();
            assert_eq!(l.len(), n);
            for k in 0..n {
                assert!((s.prior_mass(k) - 1.0 / n as f64).abs() < 1e-9);
            }
            for k in 1..n {
                assert_eq!((s.labels[k] ^ s.labels[k - 1]).count_ones(), 1);
            }
        }
        assert!(build_equiprobable_slices(1.0, 0, Labeling::Binary).is_err());
        assert!(build_equiprobable_slices(1.0, 9, Labeling::Binary).is_err());
    }

    #[test]
    fn slice_bits_examples() {
        let s = build_equiprobable_slices(3.0, 2, Labeling::Binary).unwrap();
        assert_eq!(slice_bits(-1e6, &s), vec![0, 0]);
        assert_eq!(slice_bits(1e6, &s), vec![1, 1]);
        // boundary belongs to the right interval: label 2 = (S1=0, S2=1)
        assert_eq!(slice_bits(0.0, &s), vec![0, 1]);
        assert_eq!(slice_bits(-1e-12, &s), vec![1, 0]);
    }

    #[test]
    fn slice_bits_jump_count() {
        for &lab in &[Labeling::Binary, Labeling::Gray] {
            let s = build_equiprobable_slices(1.0, 3, lab).unwrap();
            let mut jumps = 0;
            let mut prev = slice_bits(-10.0, &s);
            let mut x = -10.0;
            while x < 10.0 {
                x += 1e-3;
                let cur = slice_bits(x, &s);
                if cur != prev {
                    jumps += 1;
                }
                prev = cur;
            }
            assert_eq!(jumps, 7);
        }
    }

    #[test]
    fn remainder_roundtrip() {
        let s = build_equiprobable_slices(3.9, 2, Labeling::Binary).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let x: f64 = rng.random_range(-15.0..15.0);
            let q = slice_remainder(x, &s);
            assert!((0.0..1.0).contains(&q.0));
            let k = s.interval_of(x);
            let back = s.value_at(k, q.0).unwrap();
            assert!((back - x).abs() < 1e-7 * (1.0 + x.abs()), "{x} vs {back}");
        }
    }

    #[test]
    fn slice_map_json_roundtrip() {
        let s = build_equiprobable_slices(2.0, 3, Labeling::Gray).unwrap();
        let back = SliceMap::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert!(SliceMap::from_json(r#"{"m":2,"boundaries":[1.0,0.0,2.0],"labels":[0,1,2,3],"signal_sigma":1.0,"labeling":"binary"}"#).is_err());
    }

    #[test]
    fn map_noiseless_is_exact() {
        let s = build_equiprobable_slices(3.9, 2, Labeling::Binary).unwrap();
        let noise = GaussianDist::new(0.0, 1e-30).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..2000 {
            let x: f64 = rng.random_range(-8.0..8.0);
            let bits = slice_bits(x, &s);
            for i in 1..=2 {
                let b = map_decode_slice(x, i, &bits[..i - 1], &s, &noise, 1.0).unwrap();
                assert_eq!(b, bits[i - 1]);
            }
        }
    }

    #[test]
    fn map_m1_is_sign_rule() {
        let s = build_equiprobable_slices(2.0, 1, Labeling::Binary).unwrap();
        let noise = GaussianDist::new(0.0, 0.5).unwrap();
        for &y in &[-3.0, -0.01, 0.01, 0.7, 5.0] {
            let b = map_decode_slice(y, 1, &[], &s, &noise, 0.9).unwrap();
            assert_eq!(b, (y > 0.0) as u8);
        }
    }

    #[test]
    fn map_rejects_inconsistent_input() {
        let s = build_equiprobable_slices(2.0, 2, Labeling::Binary).unwrap();
        let noise = GaussianDist::new(0.0, 0.5).unwrap();
        assert!(map_decode_slice(0.0, 3, &[0, 0], &s, &noise, 1.0).is_err());
        assert!(map_decode_slice(0.0, 2, &[], &s, &noise, 1.0).is_err());
        assert!(map_decode_slice(0.0, 2, &[2], &s, &noise, 1.0).is_err());
    }

    // Closed-form posterior mass against adaptive quadrature of prior × likelihood.
    #[test]
    fn posterior_mass_matches_quadrature() {
        let sig = 15.5f64.sqrt();
        let s = build_equiprobable_slices(sig, 2, Labeling::Gray).unwrap();
        let noise = GaussianDist::new(0.0, 0.5).unwrap();
        for &(y, g) in &[(0.3, 1.0), (-2.7, 0.85), (4.4, 0.72), (0.0, 1.0)] {
            let post = interval_posterior(y, &s, &noise, g);
            let joint = |x: f64| {
                (-(x * x) / (2.0 * sig * sig)).exp() * (-(y - g * x).powi(2) / (2.0 * noise.variance)).exp()
            };
            let masses: Vec<f64> = (0..4)
                .map(|k| {
                    let (lo, hi) = s.interval_bounds(k);
                    integrate(joint, lo.max(-60.0), hi.min(60.0), 1e-16, 1e-12).value
                })
                .collect();
            let tot: f64 = masses.iter().sum();
            for k in 0..4 {
                let rel = (post[k] - masses[k] / tot).abs() / post[k].max(1e-300);
                assert!(rel < 1e-9 || (post[k] - masses[k] / tot).abs() < 1e-15, "y={y} k={k}");
            }
        }
    }

    #[test]
    fn gray_top_slice_is_monotone() {
        let s = build_equiprobable_slices(3.9, 2, Labeling::Gray).unwrap();
        let noise = GaussianDist::new(0.0, 0.5).unwrap();
        for known in [0u8, 1] {
            let mut flips = 0;
            let mut prev = map_decode_slice(-20.0, 2, &[known], &s, &noise, 1.0).unwrap();
            let mut y = -20.0;
            while y < 20.0 {
                y += 0.01;
                let b = map_decode_slice(y, 2, &[known], &s, &noise, 1.0).unwrap();
                if b != prev {
                    flips += 1;
                }
                prev = b;
            }
            assert_eq!(flips, 1);
        }
    }

    #[test]
    fn remainder_rules_noiseless() {
        let s = build_equiprobable_slices(3.9, 2, Labeling::Binary).unwrap();
        let noise = GaussianDist::new(0.0, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..2000 {
            let x: f64 = rng.random_range(-8.0..8.0);
            let bits = slice_bits(x, &s);
            let r = slice_remainder(x, &s);
            for rule in DecodeRule::ALL {
                let got = decode_all_slices(rule, x, &bits, Some(r), &s, &noise, 1.0).unwrap();
                assert_eq!(got, bits, "{rule:?} x={x}");
            }
        }
        assert!(decode_slice(DecodeRule::RemainderMap, 0.0, 1, &[], None, &s, &noise, 1.0).is_err());
    }

    #[test]
    fn rule_names_roundtrip() {
        for r in DecodeRule::ALL {
            assert_eq!(r.name().parse::<DecodeRule>().unwrap(), r);
        }
        assert_eq!("gray".parse::<Labeling>().unwrap(), Labeling::Gray);
        assert!("x".parse::<Labeling>().is_err());
    }

    proptest! {
        #[test]
        fn split_fraction_in_range(x in -1e6f64..1e6, spacing in 1e-3f64..10.0) {
            let (_, f) = split_periodic(x, &PeriodicBinning::new(spacing).unwrap());
            prop_assert!((0.0..1.0).contains(&f));
        }

        #[test]
        fn gray_adjacent_differ_in_one_bit(k in 0usize..(1 << 20)) {
            let a = Labeling::Gray.label(k);
            let b = Labeling::Gray.label(k + 1);
            prop_assert_eq!((a ^ b).count_ones(), 1);
        }
    }
}
