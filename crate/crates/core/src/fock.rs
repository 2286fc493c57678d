//! Truncated Fock-basis expansions of coherent and displaced squeezed states.
//!
//! Amplitude conventions follow `a = (x + i p) / √2`, so a state centered on
//! `(x0, p0)` has complex amplitude `α = (x0 + i p0) / √2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::error::{domain, Result};
use crate::math::{ln_factorial, VACUUM_VARIANCE};

/// Amplitudes `⟨n|ψ⟩` for `n = 0..=cutoff` and the probability mass that
/// lies beyond the cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockVector {
    pub amps: Vec<Complex64>,
    pub cutoff: usize,
    /// `1 - Σ |amps|²`, the truncation deficit ε.
    pub deficit: f64,
    /// Set when the cutoff leaves more than half the norm outside.
    pub low_cutoff: bool,
}

impl FockVector {
    fn from_amps(amps: Vec<Complex64>, deficit: f64) -> Self {
        let cutoff = amps.len() - 1;
        FockVector {
            amps,
            cutoff,
            deficit,
            low_cutoff: deficit > 0.5,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `ε + 2√ε`, the bound on how far a truncated expectation of an effect
    /// `0 ≤ E ≤ 1` can move from the untruncated one.
    pub fn truncation_band(&self) -> f64 {
        let e = self.deficit.max(0.0);
        e + 2.0 * e.sqrt()
    }

    pub fn dim(&self) -> usize {
        self.cutoff + 1
    }
}

/// Complex amplitude of a state centered on `(x0, p0)`.
pub fn phase_space_amplitude(x0: f64, p0: f64) -> Complex64 {
    Complex64::new(x0 / SQRT_2, p0 / SQRT_2)
}

/// Mass of a Poisson(λ) distribution above `cutoff`.
fn poisson_tail(lambda: f64, cutoff: usize) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    // P(n > N) = regularized lower incomplete gamma P(N + 1, λ)
    statrs::function::gamma::gamma_lr(cutoff as f64 + 1.0, lambda)
}

/// Fock expansion of the coherent state `|α⟩`, computed in log space.
pub fn coherent_fock(alpha: Complex64, cutoff: usize) -> FockVector {
    let lambda = alpha.norm_sqr();
    let mut amps = Vec::with_capacity(cutoff + 1);
    if lambda == 0.0 {
        amps.push(Complex64::new(1.0, 0.0));
        amps.resize(cutoff + 1, Complex64::new(0.0, 0.0));
        return FockVector::from_amps(amps, 0.0);
    }
    let ln_r = alpha.norm().ln();
    let theta = alpha.arg();
    for n in 0..=cutoff {
        let ln_mag = -0.5 * lambda + n as f64 * ln_r - 0.5 * ln_factorial(n);
        amps.push(Complex64::from_polar(ln_mag.exp(), n as f64 * theta));
    }
    FockVector::from_amps(amps, poisson_tail(lambda, cutoff))
}

/// Coherent deficit `Pr[n > cutoff]` for a given `|α|²`.
pub fn coherent_deficit(mean_photons: f64, cutoff: usize) -> f64 {
    poisson_tail(mean_photons, cutoff)
}

/// Fock expansion of a pure displaced squeezed state centered on `(x0, p0)`
/// with quadrature variances `var_x`, `var_p` (absolute units, unrotated).
///
/// Uses the three-term recurrence implied by
/// `(a cosh r + a† sinh r)|ψ⟩ = γ|ψ⟩` with `γ = α cosh r + α* sinh r`,
/// which is the Hermite-polynomial recurrence in amplitude form.
pub fn squeezed_fock(x0: f64, p0: f64, var_x: f64, var_p: f64, cutoff: usize) -> Result<FockVector> {
    if !(var_x > 0.0 && var_p > 0.0) {
        return domain("squeezed state variances must be positive");
    }
    let min_unc = VACUUM_VARIANCE * VACUUM_VARIANCE;
    if ((var_x * var_p) - min_unc).abs() > 1e-9 * min_unc {
        return domain(format!(
            "pure squeezed state needs var_x * var_p = {min_unc}, got {}",
            var_x * var_p
        ));
    }
    // var_x = v0 e^{-2r}
    let r = 0.5 * (VACUUM_VARIANCE / var_x).ln();
    let (ch, sh, th) = (r.cosh(), r.sinh(), r.tanh());
    let alpha = phase_space_amplitude(x0, p0);
    let gamma = alpha * ch + alpha.conj() * sh;
    let c0 = (-0.5 * alpha.norm_sqr() - 0.5 * alpha.conj() * alpha.conj() * th).exp() / ch.sqrt();

    let mut amps = Vec::with_capacity(cutoff + 1);
    amps.push(c0);
    for n in 0..cutoff {
        let prev = if n > 0 { amps[n - 1] * sh * (n as f64).sqrt() } else { Complex64::new(0.0, 0.0) };
        let next = (gamma * amps[n] - prev) / (ch * ((n + 1) as f64).sqrt());
        amps.push(next);
    }
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    Ok(FockVector::from_amps(amps, 1.0 - norm))
}

/// A p-squeezed state with the given squeezing in dB below vacuum.
pub fn p_squeezed_fock(x0: f64, p0: f64, squeezing_db: f64, cutoff: usize) -> Result<FockVector> {
    let var_p = VACUUM_VARIANCE * 10f64.powf(-squeezing_db / 10.0);
    let var_x = VACUUM_VARIANCE * VACUUM_VARIANCE / var_p;
    squeezed_fock(x0, p0, var_x, var_p, cutoff)
}
