//! Key-rate arithmetic: the CSS rate, bit-error probabilities of the
//! periodic and sliced encodings, per-slice rates, squeezing thresholds and
//! the Gaussian mutual information.

use serde::{Deserialize, Serialize};
use libm::erfc;
use std::f64::consts::PI;

use crate::encoding::{
    decide_from_candidates, decode_slice, remainder_candidates, slice_bits, slice_remainder, DecodeRule, SliceMap,
};
use crate::error::{domain, Error, Result};
use crate::math::{
    binary_entropy, binary_entropy_unchecked, bisect, integrate, inverse_normal_cdf, normal_cdf, normal_interval_mass,
    normal_sf, squeezing_db, GaussianDist, VACUUM_VARIANCE,
};

/// `1 - h(e_b) - h(e_p)`. Negative values are returned as is.
pub fn css_rate(e_b: f64, e_p: f64) -> Result<f64> {
    Ok(1.0 - binary_entropy(e_b)? - binary_entropy(e_p)?)
}

/// Exact parity error of the periodic code and the simple tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicError {
    /// Probability that the noise moves the value into an odd-offset bin.
    pub exact: f64,
    /// `Pr[|δ| > spacing/2]`.
    pub gp_bound: f64,
}

/// Bit error of periodic binning under Gaussian noise `δ ~ N(0, σ²)`.
pub fn periodic_bit_error(noise_sigma: f64, spacing: f64) -> Result<PeriodicError> {
    if !(noise_sigma >= 0.0) || !(spacing > 0.0) {
        return domain("periodic bit error needs sigma >= 0 and spacing > 0");
    }
    if noise_sigma == 0.0 {
        return Ok(PeriodicError { exact: 0.0, gp_bound: 0.0 });
    }
    let z = 0.5 * spacing / noise_sigma;
    let gp_bound = 2.0 * normal_sf(z);
    let mut exact = 0.0;
    let mut k = 1.0;
    loop {
        let lo = (k * spacing - 0.5 * spacing) / noise_sigma;
        let hi = (k * spacing + 0.5 * spacing) / noise_sigma;
        let term = 2.0 * normal_interval_mass(lo, hi);
        exact += term;
        if term < 1e-18 {
            break;
        }
        k += 2.0;
    }
    Ok(PeriodicError {
        exact: exact.min(gp_bound),
        gp_bound,
    })
}

/// Decision segments of a piecewise-constant function on `[lo, hi]`, found
/// by a grid scan followed by bisection of each change point.
fn decision_segments(decide: &dyn Fn(f64) -> u8, lo: f64, hi: f64, step: f64) -> Vec<(f64, f64, u8)> {
    let mut segs = Vec::new();
    let mut a = lo;
    let mut prev_y = lo;
    let mut prev = decide(lo);
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    for j in 1..=n {
        let y = if j == n { hi } else { lo + j as f64 * step };
        let cur = decide(y);
        if cur != prev {
            let (mut l, mut r) = (prev_y, y);
            for _ in 0..64 {
                let mid = 0.5 * (l + r);
                if mid <= l || mid >= r {
                    break;
                }
                if decide(mid) == prev {
                    l = mid;
                } else {
                    r = mid;
                }
            }
            segs.push((a, r, prev));
            a = r;
            prev = cur;
        }
        prev_y = y;
    }
    segs.push((a, hi, prev));
    segs
}

const SCAN_SIGMAS: f64 = 13.0;

/// Probability that Bob's estimate of slice `i` is wrong for a fixed value
/// `x`, with lower slices known, `y ~ N(gain·x, noise_var)`.
pub fn slice_error_given_x(x: f64, i: usize, s: &SliceMap, rule: DecodeRule, gain: f64, noise_var: f64) -> Result<f64> {
    let bits = slice_bits(x, s);
    let truth = bits[i - 1];
    let known = &bits[..i - 1];
    let noise = GaussianDist::new(0.0, noise_var)?;
    let sd = noise_var.sqrt();
    let center = gain * x;

    let decide: Box<dyn Fn(f64) -> u8> = if rule.uses_remainder() {
        let cands = remainder_candidates(i, known, slice_remainder(x, s), s)?;
        let likelihood = rule == DecodeRule::RemainderMap;
        let noise = noise;
        Box::new(move |y| decide_from_candidates(y, &cands, &noise, gain, likelihood))
    } else {
        // validates the arguments once; the closure repeats the same call
        decode_slice(rule, center, i, known, None, s, &noise, gain)?;
        let known = known.to_vec();
        let s = s.clone();
        Box::new(move |y| decode_slice(rule, y, i, &known, None, &s, &noise, gain).expect("validated"))
    };
    let lo = center - SCAN_SIGMAS * sd;
    let hi = center + SCAN_SIGMAS * sd;
    let segs = decision_segments(decide.as_ref(), lo, hi, sd / 8.0);
    let mut err = 0.0;
    for (a, b, bit) in segs {
        if bit != truth {
            err += normal_interval_mass((a - center) / sd, (b - center) / sd);
        }
    }
    Ok(err)
}

/// Per-slice bit-error rates of the sliced encoding.
///
/// `x ~ N(0, signal_var)`, Bob receives `y = gain·x + N(0, noise_var)`
/// and decodes slice `i` with `rule` after slices `1..i` have been
/// corrected. The outer integral over `x` is taken in the probability
/// variable `u = Φ(x/σ)` and split at the slice boundaries.
pub fn slice_error_rates_with(
    gain: f64,
    noise_var: f64,
    signal_var: f64,
    s: &SliceMap,
    rule: DecodeRule,
) -> Result<Vec<f64>> {
    if !(signal_var > 0.0) || !(noise_var > 0.0) || !(gain > 0.0) {
        return domain("slice error rates need positive gain and variances");
    }
    let sigma = signal_var.sqrt();
    let mut breaks = vec![0.0];
    breaks.extend(s.boundaries.iter().map(|&b| normal_cdf(b / sigma)));
    breaks.push(1.0);
    let mut out = Vec::with_capacity(s.m);
    for i in 1..=s.m {
        let mut total = 0.0;
        let mut fail = None;
        for w in breaks.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            let f = |u: f64| {
                let x = match inverse_normal_cdf(u) {
                    Ok(z) => z * sigma,
                    Err(_) => return 0.0,
                };
                match slice_error_given_x(x, i, s, rule, gain, noise_var) {
                    Ok(e) => e,
                    Err(e) => {
                        fail.get_or_insert(e);
                        0.0
                    }
                }
            };
            total += integrate(f, w[0], w[1], 2e-9, 1e-7).value;
        }
        if let Some(e) = fail {
            return Err(e);
        }
        out.push(total);
    }
    Ok(out)
}

/// Per-slice bit-error rates for coherent states sent through a pure-loss
/// line of transmittance `t`: gain `√t`, conditional noise at vacuum level.
/// `v_mod` is the absolute modulation variance of Alice's values.
pub fn slice_error_rates(t: f64, v_mod: f64, s: &SliceMap, rule: DecodeRule) -> Result<Vec<f64>> {
    if !(t > 0.0 && t <= 1.0) {
        return domain(format!("transmittance must be in (0, 1], got {t}"));
    }
    slice_error_rates_with(t.sqrt(), VACUUM_VARIANCE, v_mod, s, rule)
}

/// Per-slice rates and their clamped sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRates {
    /// `1 - h(e^b_i) - h(e^p_i)` before clamping.
    pub raw: Vec<f64>,
    /// `max(raw_i, 0)`.
    pub per_slice: Vec<f64>,
    pub total: f64,
}

pub fn slice_rates(e_b: &[f64], e_p: &[f64]) -> Result<SliceRates> {
    if e_b.len() != e_p.len() {
        return Err(Error::LengthMismatch {
            expected: e_b.len(),
            got: e_p.len(),
        });
    }
    let raw = e_b
        .iter()
        .zip(e_p)
        .map(|(&b, &p)| css_rate(b, p))
        .collect::<Result<Vec<_>>>()?;
    let per_slice: Vec<f64> = raw.iter().map(|&r| r.max(0.0)).collect();
    let total = per_slice.iter().sum();
    Ok(SliceRates { raw, per_slice, total })
}

/// `0.5·log2(1 + snr)`.
pub fn gaussian_mutual_info(snr: f64) -> Result<f64> {
    if !(snr >= 0.0) {
        return domain(format!("snr must be nonnegative, got {snr}"));
    }
    Ok(0.5 * (1.0 + snr).log2())
}

/// Symmetric error rate at which `1 - 2h(e)` vanishes.
pub fn critical_symmetric_error() -> f64 {
    bisect(|e| 1.0 - 2.0 * binary_entropy_unchecked(e), 1e-6, 0.5, 1e-14).expect("bracketed")
}

/// Error models mapping the squeezing width `σ̃` to `(e_b, e_p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorModel {
    /// `e = erfc(√π / (2σ̃))`: tail of a density with variance `σ̃²/2`
    /// beyond the half-bin `√π/2`, in both quadratures.
    SymmetricErfc,
    /// Exact parity error of a `√π` lattice under noise of variance `σ̃²/2`.
    SymmetricParity,
}

impl ErrorModel {
    pub const ALL: [ErrorModel; 2] = [ErrorModel::SymmetricErfc, ErrorModel::SymmetricParity];

    pub fn name(self) -> &'static str {
        match self {
            ErrorModel::SymmetricErfc => "symmetric-erfc",
            ErrorModel::SymmetricParity => "symmetric-parity",
        }
    }

    pub fn errors(self, sigma_tilde: f64) -> (f64, f64) {
        let e = match self {
            ErrorModel::SymmetricErfc => erfc(PI.sqrt() / (2.0 * sigma_tilde)),
            ErrorModel::SymmetricParity => {
                periodic_bit_error(sigma_tilde / 2f64.sqrt(), PI.sqrt())
                    .expect("positive width")
                    .exact
            }
        };
        (e, e)
    }
}

impl std::str::FromStr for ErrorModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ErrorModel::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown error model '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub sigma_tilde: f64,
    pub error_rate_b: f64,
    pub error_rate_p: f64,
    pub squeezing_db: f64,
}

/// Largest `σ̃` in `[lo, hi]` with a nonnegative CSS rate, by bisection on
/// `css_rate(model(σ̃)) = 0`, reported with its squeezing in dB.
pub fn threshold_squeezing(model: impl Fn(f64) -> (f64, f64), lo: f64, hi: f64) -> Result<Threshold> {
    let f = |st: f64| {
        let (b, p) = model(st);
        1.0 - binary_entropy_unchecked(b.clamp(0.0, 1.0)) - binary_entropy_unchecked(p.clamp(0.0, 1.0))
    };
    let st = bisect(f, lo, hi, 1e-10)?;
    let (b, p) = model(st);
    Ok(Threshold {
        sigma_tilde: st,
        error_rate_b: b,
        error_rate_p: p,
        squeezing_db: squeezing_db(st * st),
    })
}

/// Threshold for a shipped model on the default bracket.
pub fn threshold_for_model(model: ErrorModel) -> Result<Threshold> {
    threshold_squeezing(|st| model.errors(st), 0.05, 1.5)
}
