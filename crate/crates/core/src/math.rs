//! Numerical foundations: unit conventions, binary entropy, Gaussian
//! probabilities, the inverse normal CDF and adaptive quadrature.
//!
//! All quadrature variances in the crate are absolute values in units where
//! `[x, p] = i`, so the vacuum (shot-noise) variance is exactly
//! [`VACUUM_VARIANCE`]. "Vacuum units" means multiples of it.

use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{domain, Result};

/// Quadrature variance of the vacuum and of every coherent state.
pub const VACUUM_VARIANCE: f64 = 0.5;

/// Session-wide unit conventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub vacuum_variance: f64,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            vacuum_variance: VACUUM_VARIANCE,
        }
    }
}

impl Conventions {
    /// Converts a variance given in vacuum units to an absolute variance.
    pub fn from_vacuum_units(&self, v: f64) -> f64 {
        v * self.vacuum_variance
    }

    pub fn to_vacuum_units(&self, v: f64) -> f64 {
        v / self.vacuum_variance
    }
}

/// A one-dimensional normal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDist {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianDist {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
            return domain(format!(
                "gaussian needs finite mean and positive variance, got ({mean}, {variance})"
            ));
        }
        Ok(GaussianDist { mean, variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Probability density at `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std_dev();
        (-0.5 * z * z).exp() / (self.std_dev() * (2.0 * PI).sqrt())
    }

    /// Natural log of the density at `x`.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std_dev();
        -0.5 * z * z - self.std_dev().ln() - 0.5 * (2.0 * PI).ln()
    }

    /// Probability mass of the interval `[a, b]`.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        normal_interval_mass((a - self.mean) / self.std_dev(), (b - self.mean) / self.std_dev())
    }
}

/// Binary Shannon entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(e: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&e) {
        return domain(format!("binary entropy needs 0 <= e <= 1, got {e}"));
    }
    Ok(binary_entropy_unchecked(e))
}

pub(crate) fn binary_entropy_unchecked(e: f64) -> f64 {
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    term(e) + term(1.0 - e)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal upper tail `Q(z) = 1 - Φ(z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `Φ(b) - Φ(a)` for a standard normal, evaluated on whichever tail avoids
/// cancellation.
pub fn normal_interval_mass(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - normal_sf(b)
    }
}

/// `Pr[|X - center| > halfwidth]` for `X ~ d`.
pub fn gaussian_outside_prob(d: &GaussianDist, center: f64, halfwidth: f64) -> f64 {
    let s = d.std_dev();
    let lo = (center - halfwidth - d.mean) / s;
    let hi = (center + halfwidth - d.mean) / s;
    normal_cdf(lo) + normal_sf(hi)
}

/// `Pr[|X - center| <= halfwidth]` for `X ~ d`.
pub fn gaussian_inside_prob(d: &GaussianDist, center: f64, halfwidth: f64) -> f64 {
    let s = d.std_dev();
    normal_interval_mass(
        (center - halfwidth - d.mean) / s,
        (center + halfwidth - d.mean) / s,
    )
}

/// Quantile function of the standard normal distribution.
pub fn inverse_normal_cdf(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return domain(format!("inverse normal CDF needs 0 < q < 1, got {q}"));
    }
    let mut z = -SQRT_2 * erfc_inv(2.0 * q);
    // Newton polish against whichever tail keeps full relative precision
    for _ in 0..2 {
        let pdf = normal_pdf(z);
        if pdf <= 0.0 {
            break;
        }
        let resid = if z < 0.0 {
            normal_cdf(z) - q
        } else {
            (1.0 - q) - normal_sf(z)
        };
        z -= resid / pdf;
    }
    Ok(z)
}

/// Inverse normal CDF parameterized by the upper-tail probability, for
/// quantiles very close to one: returns `z` with `Q(z) = tail`.
pub fn inverse_normal_sf(tail: f64) -> Result<f64> {
    inverse_normal_cdf(tail).map(|z| -z)
}

/// Transmittance of a line with the given loss in dB.
pub fn loss_db_to_transmittance(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Loss in dB for a transmittance.
pub fn transmittance_to_loss_db(t: f64) -> f64 {
    -10.0 * t.log10()
}

/// Squeezing in dB, `10 log10(1 / σ̃²)`.
pub fn squeezing_db(sigma_tilde_sq: f64) -> f64 {
    10.0 * (1.0 / sigma_tilde_sq).log10()
}

/// `ln n!` via the log-gamma function.
pub fn ln_factorial(n: usize) -> f64 {
    statrs::function::gamma::ln_gamma(n as f64 + 1.0)
}

/// Bisection root of `f` on `[lo, hi]` to absolute tolerance `tol`.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(crate::Error::NoSignChange { lo, hi });
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * GK_WEIGHTS[7];
    let mut gauss = fc * G_WEIGHTS[3];
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        kronrod += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += G_WEIGHTS[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive Gauss-Kronrod integration of `f` over finite `[a, b]`.
///
/// Subdivides the interval with the largest error estimate until the total
/// error estimate drops below `max(abs_tol, rel_tol * |value|)` or the
/// interval budget is exhausted.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Quadrature {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&mut f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let value: f64 = pieces.iter().map(|p| p.2).sum();
        let error: f64 = pieces.iter().map(|p| p.3).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) || pieces.len() >= MAX_INTERVALS {
            return Quadrature { value, error };
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Quadrature { value, error };
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// Adaptive integration over the whole real line, using `x = t / (1 - t²)`.
pub fn integrate_real_line(mut f: impl FnMut(f64) -> f64, abs_tol: f64, rel_tol: f64) -> Quadrature {
    integrate(
        |t| {
            let d = 1.0 - t * t;
            if d <= 0.0 {
                return 0.0;
            }
            let x = t / d;
            let jac = (1.0 + t * t) / (d * d);
            let v = f(x) * jac;
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        -1.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}
