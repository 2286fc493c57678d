//! Phase-error estimation from coherent probes.
//!
//! Bob's yes/no effect `E` restricted to the first `𝒩 + 1` Fock states is
//! reconstructed from the frequencies `F_k` of "yes" outcomes on `K = (𝒩+1)²`
//! coherent probes `|α_k⟩`:
//!
//! ```text
//! F_k ≈ Σ_{l,n ≤ 𝒩} conj(c_k^l) c_k^n ⟨l|E|n⟩ = (Γ vec(E))_k
//! ```
//!
//! Solving this system gives the matrix elements, and the phase error of a
//! squeezed check state `ψ` follows as `⟨ψ_𝒩|E|ψ_𝒩⟩`, up to the truncation
//! band `ε + 2√ε`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::channel::{effect_outside_prob, homodyne_sample, propagate, ChannelModel, GaussianModState, Quadrature};
use crate::error::{domain, Error, Result};
use crate::fock::{coherent_deficit, coherent_fock, p_squeezed_fock, FockVector};
use crate::math::{bisect, VACUUM_VARIANCE};

/// Coherent probe amplitudes used to reconstruct one effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub alphas: Vec<Complex64>,
    pub copies_per_probe: usize,
    pub cutoff: usize,
    pub eps_max: f64,
}

impl ProbeSet {
    /// Checks the probe count and per-probe deficits.
    pub fn new(alphas: Vec<Complex64>, cutoff: usize, eps_max: f64, copies_per_probe: usize) -> Result<Self> {
        let k = (cutoff + 1) * (cutoff + 1);
        if alphas.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                got: alphas.len(),
            });
        }
        if copies_per_probe == 0 {
            return domain("copies per probe must be at least 1");
        }
        for a in &alphas {
            let d = coherent_deficit(a.norm_sqr(), cutoff);
            if d >= eps_max {
                return domain(format!("probe {a} has deficit {d:.3e} >= eps_max {eps_max}"));
            }
        }
        Ok(ProbeSet {
            alphas,
            copies_per_probe,
            cutoff,
            eps_max,
        })
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    pub fn with_copies(mut self, m: usize) -> Self {
        self.copies_per_probe = m.max(1);
        self
    }

    /// Largest per-probe truncation deficit.
    pub fn max_deficit(&self) -> f64 {
        self.alphas
            .iter()
            .map(|a| coherent_deficit(a.norm_sqr(), self.cutoff))
            .fold(0.0, f64::max)
    }
}

/// Largest `|α|` whose Fock deficit at `cutoff` stays below `eps`.
pub fn max_probe_radius(cutoff: usize, eps: f64) -> Result<f64> {
    // the deficit grows monotonically with |α|
    bisect(|r| coherent_deficit(r * r, cutoff) - eps, 0.0, 10.0 + 2.0 * (cutoff as f64).sqrt() + cutoff as f64, 1e-12)
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653; // π(3 - √5)
const MAX_DESIGN_ROUNDS: usize = 64;

/// Places `K = (𝒩+1)²` probes on a jittered golden-angle spiral inside the
/// disk where each probe's deficit stays below `eps_max`, retrying with new
/// jitter until the condition number of `Γ` drops below `cond_max`.
pub fn design_probes<R: Rng + ?Sized>(cutoff: usize, eps_max: f64, cond_max: f64, rng: &mut R) -> Result<ProbeSet> {
    if !(eps_max > 0.0 && eps_max < 0.1) {
        return domain(format!("eps_max must lie in (0, 0.1), got {eps_max}"));
    }
    let k = (cutoff + 1) * (cutoff + 1);
    // stay a little inside the boundary so that jitter cannot cross it
    let r_max = max_probe_radius(cutoff, 0.95 * eps_max)?;
    let mut best = f64::INFINITY;
    for _ in 0..MAX_DESIGN_ROUNDS {
        let alphas: Vec<Complex64> = (0..k)
            .map(|j| {
                let r = r_max * ((j as f64 + 0.5) / k as f64).sqrt() * rng.random_range(0.9..1.0);
                let th = GOLDEN_ANGLE * j as f64 + rng.random_range(-0.15..0.15);
                Complex64::from_polar(r, th)
            })
            .collect();
        let probes = ProbeSet::new(alphas, cutoff, eps_max, 1)?;
        let g = build_gamma(&probes);
        if g.condition_number < cond_max {
            return Ok(probes);
        }
        best = best.min(g.condition_number);
    }
    Err(Error::ProbeDesign {
        rounds: MAX_DESIGN_ROUNDS,
        best_condition: best,
    })
}

/// The `K × (𝒩+1)²` coefficient matrix with
/// `Γ[k, l(𝒩+1) + n] = conj(c_k^l)·c_k^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMatrix {
    pub entries: DMatrix<Complex64>,
    pub condition_number: f64,
    pub smallest_singular_value: f64,
    pub cutoff: usize,
    /// Truncation deficits of the probes, row by row.
    pub deficits: Vec<f64>,
}

impl GammaMatrix {
    pub fn dim(&self) -> usize {
        self.cutoff + 1
    }

    /// Spectral norm of `Γ⁻¹`.
    pub fn inverse_norm(&self) -> f64 {
        1.0 / self.smallest_singular_value
    }

    fn lu_solve(&self, rhs: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if !self.condition_number.is_finite() {
            return Err(Error::Singular);
        }
        self.entries
            .clone()
            .full_piv_lu()
            .solve(rhs)
            .ok_or(Error::Singular)
    }

    fn lu_solve_transpose(&self, rhs: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if !self.condition_number.is_finite() {
            return Err(Error::Singular);
        }
        self.entries
            .transpose()
            .full_piv_lu()
            .solve(rhs)
            .ok_or(Error::Singular)
    }
}

pub fn build_gamma(p: &ProbeSet) -> GammaMatrix {
    let d = p.cutoff + 1;
    let k = p.k();
    let mut entries = DMatrix::<Complex64>::zeros(k, d * d);
    let mut deficits = Vec::with_capacity(k);
    for (row, a) in p.alphas.iter().enumerate() {
        let c = coherent_fock(*a, p.cutoff);
        deficits.push(c.deficit);
        for l in 0..d {
            for n in 0..d {
                entries[(row, l * d + n)] = c.amps[l].conj() * c.amps[n];
            }
        }
    }
    let sv = entries.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = if k == d * d {
        sv.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    let condition_number = if smin > 0.0 && smax / smin < 1e300 { smax / smin } else { f64::INFINITY };
    GammaMatrix {
        entries,
        condition_number,
        smallest_singular_value: smin,
        cutoff: p.cutoff,
        deficits,
    }
}

/// Reconstructed truncated effect matrix `⟨l|E|n⟩`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub dim: usize,
    pub matrix: Vec<Complex64>,
    /// Frobenius norm of `E - E†`.
    pub hermiticity_residual: f64,
    /// Extreme eigenvalues of the Hermitian part `(E + E†)/2`.
    pub spectrum_range: (f64, f64),
}

impl EffectEstimate {
    pub fn get(&self, l: usize, n: usize) -> Complex64 {
        self.matrix[l * self.dim + n]
    }

    pub fn to_dmatrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.matrix)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }

    /// Builds an estimate from a full matrix, computing the diagnostics.
    pub fn from_dmatrix(e: &DMatrix<Complex64>) -> Self {
        let dim = e.nrows();
        let adj = e.adjoint();
        let hermiticity_residual = (e - &adj).norm();
        let herm = (e + &adj).scale(0.5);
        let eig = herm.symmetric_eigenvalues();
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut matrix = Vec::with_capacity(dim * dim);
        for l in 0..dim {
            for n in 0..dim {
                matrix.push(e[(l, n)]);
            }
        }
        EffectEstimate {
            dim,
            matrix,
            hermiticity_residual,
            spectrum_range: (lo, hi),
        }
    }
}

fn check_f_row(f_row: &[f64], g: &GammaMatrix) -> Result<()> {
    if f_row.len() != g.entries.nrows() {
        return Err(Error::LengthMismatch {
            expected: g.entries.nrows(),
            got: f_row.len(),
        });
    }
    if f_row.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return domain("effect frequencies must lie in [0, 1]");
    }
    Ok(())
}

/// Solves `Γ vec(E) = F` by a fully pivoted LU decomposition.
pub fn invert_for_effect(f_row: &[f64], g: &GammaMatrix) -> Result<EffectEstimate> {
    check_f_row(f_row, g)?;
    let rhs = DVector::from_iterator(f_row.len(), f_row.iter().map(|&f| Complex64::new(f, 0.0)));
    let v = g.lu_solve(&rhs)?;
    let d = g.dim();
    let e = DMatrix::from_fn(d, d, |l, n| v[l * d + n]);
    Ok(EffectEstimate::from_dmatrix(&e))
}

/// Forward model: `F = Γ vec(E)` for a known truncated effect.
pub fn forward_frequencies(e: &DMatrix<Complex64>, g: &GammaMatrix) -> Vec<f64> {
    let d = g.dim();
    let v = DVector::from_fn(d * d, |j, _| e[(j / d, j % d)]);
    (&g.entries * v).iter().map(|z| z.re).collect()
}

/// `true` iff `‖Γ⁻¹‖·(ε + 2√ε)·√K ≤ ‖Γ⁻¹F‖ / ratio_min`, i.e. the worst-case
/// truncation perturbation is small against the reconstructed signal.
pub fn conditioning_ok(g: &GammaMatrix, eps: f64, f_row: &[f64], ratio_min: f64) -> bool {
    conditioning_ratio(g, eps, f_row).is_some_and(|r| r >= ratio_min)
}

/// `‖Γ⁻¹F‖ / (‖Γ⁻¹‖·(ε + 2√ε)·√K)`; infinite when `ε = 0` and `F ≠ 0`,
/// `None` when the signal vanishes or the system is singular.
pub fn conditioning_ratio(g: &GammaMatrix, eps: f64, f_row: &[f64]) -> Option<f64> {
    if f_row.len() != g.entries.nrows() {
        return None;
    }
    let rhs = DVector::from_iterator(f_row.len(), f_row.iter().map(|&f| Complex64::new(f, 0.0)));
    let signal = g.lu_solve(&rhs).ok()?.norm();
    if !(signal > 0.0) {
        return None;
    }
    let e = eps.max(0.0);
    let noise = g.inverse_norm() * (e + 2.0 * e.sqrt()) * (f_row.len() as f64).sqrt();
    Some(if noise == 0.0 { f64::INFINITY } else { signal / noise })
}

/// Estimate of `⟨ψ|E|ψ⟩` from a truncated target and reconstructed effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    /// Real part clamped to `[0, 1]`.
    pub value: f64,
    /// Unclamped real part.
    pub raw: f64,
    /// `ε + 2√ε` for the target's deficit.
    pub truncation_band: f64,
}

pub fn phi_estimate(e: &EffectEstimate, target: &FockVector) -> Result<PhiEstimate> {
    if target.dim() != e.dim {
        return Err(Error::LengthMismatch {
            expected: e.dim,
            got: target.dim(),
        });
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 0..e.dim {
        for n in 0..e.dim {
            acc += target.amps[l].conj() * target.amps[n] * e.get(l, n);
        }
    }
    Ok(PhiEstimate {
        value: acc.re.clamp(0.0, 1.0),
        raw: acc.re,
        truncation_band: target.truncation_band(),
    })
}

/// Weights `w = Γ⁻ᵀ vec(ψψ†)` with `φ = Σ_k w_k F_k`.
pub fn phi_weights(g: &GammaMatrix, target: &FockVector) -> Result<Vec<Complex64>> {
    let d = g.dim();
    if target.dim() != d {
        return Err(Error::LengthMismatch { expected: d, got: target.dim() });
    }
    let a = DVector::from_fn(d * d, |j, _| target.amps[j / d].conj() * target.amps[j % d]);
    Ok(g.lu_solve_transpose(&a)?.iter().cloned().collect())
}

/// Binomial standard deviation of `Re φ` when each `F_k` is a mean of `m`
/// yes/no outcomes.
pub fn phi_std(weights: &[Complex64], f_row: &[f64], m: usize) -> f64 {
    weights
        .iter()
        .zip(f_row)
        .map(|(w, &f)| w.re * w.re * f * (1.0 - f) / m as f64)
        .sum::<f64>()
        .sqrt()
}

/// Mean of the per-check estimates.
pub fn aggregate_phase_error(phis: &[f64]) -> Result<f64> {
    if phis.is_empty() {
        return domain("no phase estimates to aggregate");
    }
    if phis.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return domain("phase estimates must lie in [0, 1]");
    }
    Ok(phis.iter().sum::<f64>() / phis.len() as f64)
}

/// Pearson χ² statistic for equal success probability across batches of
/// `(hits, trials)`, with its degrees of freedom.
pub fn homogeneity_chi2(batches: &[(u64, u64)]) -> (f64, usize) {
    let hits: u64 = batches.iter().map(|b| b.0).sum();
    let trials: u64 = batches.iter().map(|b| b.1).sum();
    if batches.len() < 2 || trials == 0 || hits == 0 || hits == trials {
        return (0.0, batches.len().saturating_sub(1));
    }
    let p = hits as f64 / trials as f64;
    let chi2 = batches
        .iter()
        .filter(|b| b.1 > 0)
        .map(|&(h, n)| {
            let e = p * n as f64;
            let e0 = (1.0 - p) * n as f64;
            (h as f64 - e).powi(2) / e + ((n - h) as f64 - e0).powi(2) / e0
        })
        .sum();
    (chi2, batches.len() - 1)
}

/// Window effect on one quadrature: "yes" when the outcome lies more than
/// `halfwidth` from `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowEffect {
    pub quadrature: Quadrature,
    pub center: f64,
    pub halfwidth: f64,
}

impl WindowEffect {
    pub fn fires(&self, value: f64) -> bool {
        (value - self.center).abs() > self.halfwidth
    }
}

/// Phase-space state of a coherent probe of amplitude `α`.
pub fn probe_state(alpha: Complex64) -> GaussianModState {
    GaussianModState::coherent(alpha.re * 2f64.sqrt(), alpha.im * 2f64.sqrt())
}

/// Sends `M` copies of every probe through the channel and records the
/// fraction of "yes" outcomes of the effect, probe by probe.
pub fn simulate_frequencies<R: Rng + ?Sized>(
    probes: &ProbeSet,
    channel: &ChannelModel,
    effect: &WindowEffect,
    rng: &mut R,
) -> Vec<f64> {
    let m = probes.copies_per_probe;
    probes
        .alphas
        .iter()
        .map(|&a| {
            let s = probe_state(a);
            let hits = (0..m)
                .filter(|_| {
                    let out = propagate(&s, channel, rng);
                    effect.fires(homodyne_sample(&out, effect.quadrature, rng).value)
                })
                .count();
            hits as f64 / m as f64
        })
        .collect()
}

/// Complete single-check estimate with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEstimate {
    pub phi: PhiEstimate,
    pub statistical_sigma: f64,
    pub frequencies: Vec<f64>,
    pub conditioning_ratio: Option<f64>,
    pub effect: EffectEstimate,
}

/// Reconstructs the effect from measured frequencies and evaluates it on
/// the target.
pub fn estimate_check(g: &GammaMatrix, frequencies: Vec<f64>, copies: usize, target: &FockVector) -> Result<CheckEstimate> {
    let effect = invert_for_effect(&frequencies, g)?;
    let phi = phi_estimate(&effect, target)?;
    let w = phi_weights(g, target)?;
    let eps = g.deficits.iter().cloned().fold(0.0, f64::max);
    Ok(CheckEstimate {
        phi,
        statistical_sigma: phi_std(&w, &frequencies, copies),
        conditioning_ratio: conditioning_ratio(g, eps, &frequencies),
        frequencies,
        effect,
    })
}

/// Half the standard lattice pitch, `√π / 2`.
pub fn default_halfwidth() -> f64 {
    0.5 * PI.sqrt()
}

/// Setup of a single estimator run against a p-squeezed target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roundtrip {
    pub cutoff: usize,
    pub eps_max: f64,
    pub cond_max: f64,
    pub copies: usize,
    pub squeezing_db: f64,
    /// Target center `p_0`; the window is centered there too.
    pub center: f64,
    pub halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripResult {
    pub estimate: f64,
    /// Exact Gaussian probability that the target's outcome leaves the window.
    pub oracle: f64,
    pub truncation_band: f64,
    pub statistical_sigma: f64,
    pub condition_number: f64,
    pub probes: Vec<Complex64>,
}

impl RoundtripResult {
    pub fn error(&self) -> f64 {
        (self.estimate - self.oracle).abs()
    }

    /// `|estimate - oracle| ≤ (ε + 2√ε) + 3σ`.
    pub fn within_band(&self) -> bool {
        self.error() <= self.truncation_band + 3.0 * self.statistical_sigma
    }
}

/// Designs probes, simulates their frequencies through `channel`, and
/// compares the estimate with the closed-form value for the target.
pub fn roundtrip<R: Rng + ?Sized>(setup: &Roundtrip, channel: &ChannelModel, rng: &mut R) -> Result<RoundtripResult> {
    let probes = design_probes(setup.cutoff, setup.eps_max, setup.cond_max, rng)?.with_copies(setup.copies);
    let g = build_gamma(&probes);
    let effect = WindowEffect {
        quadrature: Quadrature::P,
        center: setup.center,
        halfwidth: setup.halfwidth,
    };
    let f = simulate_frequencies(&probes, channel, &effect, rng);
    let target = p_squeezed_fock(0.0, setup.center, setup.squeezing_db, setup.cutoff)?;
    let est = estimate_check(&g, f, setup.copies, &target)?;
    let var_p = VACUUM_VARIANCE * 10f64.powf(-setup.squeezing_db / 10.0);
    let state = GaussianModState {
        mean_x: 0.0,
        mean_p: setup.center,
        var_x: VACUUM_VARIANCE * VACUUM_VARIANCE / var_p,
        var_p,
    };
    let out = channel
        .propagate_gaussian(&state)
        .ok_or_else(|| Error::Domain("closed-form oracle needs a Gaussian channel".into()))?;
    Ok(RoundtripResult {
        estimate: est.phi.value,
        oracle: effect_outside_prob(&out, Quadrature::P, setup.center, setup.halfwidth),
        truncation_band: est.phi.truncation_band,
        statistical_sigma: est.statistical_sigma,
        condition_number: g.condition_number,
        probes: probes.alphas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{p_squeezed_fock, squeezed_fock};
    use crate::math::gaussian_outside_prob;
    use crate::math::GaussianDist;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_unitary(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        let a = DMatrix::from_fn(d, d, |_, _| {
            c(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng))
        });
        a.qr().q()
    }

    fn random_effect(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        let u = random_unitary(d, rng);
        let lam = DMatrix::from_fn(d, d, |i, j| if i == j { c(rng.random_range(0.0..1.0), 0.0) } else { c(0.0, 0.0) });
        &u * lam * u.adjoint()
    }

    #[test]
    fn cutoff_zero_is_scalar() {
        let a = c(0.2, -0.1);
        let p = ProbeSet::new(vec![a], 0, 0.09, 1).unwrap();
        let g = build_gamma(&p);
        assert!((g.entries[(0, 0)].re - (-a.norm_sqr()).exp()).abs() < 1e-15);
        let e = invert_for_effect(&[0.4], &g).unwrap();
        assert!((e.get(0, 0).re - 0.4 * a.norm_sqr().exp()).abs() < 1e-12);

        let p = ProbeSet::new(vec![c(0.0, 0.0)], 0, 0.09, 1).unwrap();
        assert_eq!(build_gamma(&p).entries[(0, 0)], c(1.0, 0.0));
    }

    #[test]
    fn four_distinct_probes_invertible() {
        let p = ProbeSet::new(vec![c(0.1, 0.0), c(0.0, 0.4), c(-0.3, -0.1), c(0.2, -0.5)], 1, 0.09, 1).unwrap();
        let g = build_gamma(&p);
        let det = g.entries.clone().determinant();
        assert!(det.norm() > 1e-6, "{det}");
        assert!(g.condition_number.is_finite());
    }

    #[test]
    fn duplicate_probes_rejected() {
        let p = ProbeSet::new(vec![c(0.1, 0.2), c(0.1, 0.2), c(-0.3, 0.0), c(0.0, -0.4)], 1, 0.09, 1).unwrap();
        let g = build_gamma(&p);
        assert!(g.condition_number > 1e12);
        assert!(invert_for_effect(&[0.1, 0.1, 0.1, 0.1], &g).is_err() || g.condition_number > 1e12);
    }

    #[test]
    fn gamma_rows_and_phase_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = design_probes(3, 0.09, 1e12, &mut rng).unwrap();
        let g = build_gamma(&p);
        let d = g.dim();
        for k in 0..p.k() {
            let diag: f64 = (0..d).map(|l| g.entries[(k, l * d + l)].re).sum();
            assert!((diag - (1.0 - g.deficits[k])).abs() < 1e-10);
            let fock = coherent_fock(p.alphas[k], 3);
            for l in 0..d {
                for n in 0..d {
                    let want = fock.amps[l].conj() * fock.amps[n];
                    assert!((g.entries[(k, l * d + n)] - want).norm() < 1e-12);
                }
            }
        }
        let theta = 0.7;
        let rot: Vec<Complex64> = p.alphas.iter().map(|a| a * Complex64::from_polar(1.0, theta)).collect();
        let gr = build_gamma(&ProbeSet::new(rot, 3, 0.09, 1).unwrap());
        for k in 0..p.k() {
            for l in 0..d {
                for n in 0..d {
                    let ph = Complex64::from_polar(1.0, (n as f64 - l as f64) * theta);
                    assert!((gr.entries[(k, l * d + n)] - g.entries[(k, l * d + n)] * ph).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn design_respects_deficit_and_rejects_bad_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for cutoff in 0..=4 {
            let p = design_probes(cutoff, 0.05, 1e14, &mut rng).unwrap();
            assert_eq!(p.k(), (cutoff + 1) * (cutoff + 1));
            assert!(p.max_deficit() < 0.05);
        }
        assert!(design_probes(1, 0.2, 1e6, &mut rng).is_err());
        match design_probes(2, 0.05, 1.0, &mut rng) {
            Err(Error::ProbeDesign { best_condition, .. }) => assert!(best_condition > 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn noiseless_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cases = 0;
        while cases < 50 {
            let cutoff = rng.random_range(0..=3usize);
            let p = design_probes(cutoff, 0.09, 1e10, &mut rng).unwrap();
            let g = build_gamma(&p);
            let e = random_effect(cutoff + 1, &mut rng);
            let f = forward_frequencies(&e, &g);
            let est = invert_for_effect(&f, &g).unwrap();
            let err = (est.to_dmatrix() - &e).norm() / e.norm();
            assert!(err < 1e-6, "cutoff {cutoff}: {err}");
            assert!(est.hermiticity_residual < 1e-6);
            cases += 1;
        }
    }

    #[test]
    fn perturbation_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = design_probes(2, 0.05, 1e8, &mut rng).unwrap();
        let g = build_gamma(&p);
        let e = random_effect(3, &mut rng);
        let f = forward_frequencies(&e, &g);
        let eps = p.max_deficit();
        let band = eps + 2.0 * eps.sqrt();
        for _ in 0..20 {
            let eta: Vec<f64> = (0..f.len()).map(|_| rng.random_range(-band..band)).collect();
            let fp: Vec<f64> = f.iter().zip(&eta).map(|(a, b)| (a + b).clamp(0.0, 1.0)).collect();
            let d: Vec<f64> = fp.iter().zip(&f).map(|(a, b)| a - b).collect();
            let eta_norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            let est = invert_for_effect(&fp, &g).unwrap();
            let err = (est.to_dmatrix() - &e).norm();
            assert!(err <= g.inverse_norm() * eta_norm * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn conditioning_examples() {
        let p = ProbeSet::new(vec![c(0.1, 0.0), c(0.0, 0.4), c(-0.3, -0.1), c(0.2, -0.5)], 1, 0.09, 1).unwrap();
        let g = build_gamma(&p);
        assert!(conditioning_ok(&g, 0.0, &[0.2, 0.3, 0.1, 0.4], 10.0));
        assert!(!conditioning_ok(&g, 0.0, &[0.0; 4], 10.0));
        assert!(!conditioning_ok(&g, 1e-6, &[0.0; 4], 10.0));

        // a well-conditioned 2x2 grid with a tiny deficit
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = design_probes(1, 0.09, 1e4, &mut rng).unwrap();
        let g = build_gamma(&p);
        let e = DMatrix::from_fn(2, 2, |i, j| if i == j { c(0.3 + 0.2 * i as f64, 0.0) } else { c(0.05, 0.0) });
        let f = forward_frequencies(&e, &g);
        assert!(conditioning_ok(&g, 1e-12, &f, 10.0), "{:?}", conditioning_ratio(&g, 1e-12, &f));
    }

    #[test]
    fn phi_examples() {
        let id = DMatrix::<Complex64>::identity(4, 4);
        let e = EffectEstimate::from_dmatrix(&id);
        let t = squeezed_fock(0.4, 0.2, 0.3, 0.25 / 0.3, 3).unwrap();
        let phi = phi_estimate(&e, &t).unwrap();
        assert!((phi.raw - (1.0 - t.deficit)).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = design_probes(2, 0.05, 1e8, &mut rng).unwrap();
        let g = build_gamma(&p);
        let eff = random_effect(3, &mut rng);
        let f = forward_frequencies(&eff, &g);
        let est = invert_for_effect(&f, &g).unwrap();
        for k in 0..p.k() {
            let probe = coherent_fock(p.alphas[k], 2);
            let phi = phi_estimate(&est, &probe).unwrap();
            assert!((phi.raw - f[k]).abs() < 1e-9);
        }
        assert!(phi_estimate(&est, &coherent_fock(c(0.0, 0.0), 3)).is_err());
    }

    #[test]
    fn weights_reproduce_phi() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = design_probes(2, 0.05, 1e8, &mut rng).unwrap();
        let g = build_gamma(&p);
        let t = p_squeezed_fock(0.0, 0.3, 3.0, 2).unwrap();
        let f: Vec<f64> = (0..p.k()).map(|_| rng.random_range(0.0..1.0)).collect();
        let w = phi_weights(&g, &t).unwrap();
        let via_w: f64 = w.iter().zip(&f).map(|(w, f)| (w * f).re).sum();
        let via_e = phi_estimate(&invert_for_effect(&f, &g).unwrap(), &t).unwrap().raw;
        assert!((via_w - via_e).abs() < 1e-9);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_phase_error(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(aggregate_phase_error(&[1.0]).unwrap(), 1.0);
        assert!((aggregate_phase_error(&[0.2, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert!(aggregate_phase_error(&[]).is_err());
    }

    #[test]
    fn chi2_homogeneity() {
        let (chi, dof) = homogeneity_chi2(&[(50, 100), (50, 100), (50, 100)]);
        assert_eq!((chi, dof), (0.0, 2));
        let (chi, _) = homogeneity_chi2(&[(10, 100), (90, 100)]);
        assert!(chi > 100.0);
    }

    #[test]
    fn estimator_matches_gaussian_oracle_noiselessly() {
        // exact frequencies: the only error left is truncation, of the
        // probes and of the target
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = default_halfwidth();
        for cutoff in [1usize, 2, 3] {
            let p = design_probes(cutoff, 0.09, 1e12, &mut rng).unwrap();
            let g = build_gamma(&p);
            for t in [1.0, 0.8] {
                let ch = ChannelModel::beam_splitter(t);
                let f: Vec<f64> = p
                    .alphas
                    .iter()
                    .map(|&a| {
                        let out = ch.propagate_gaussian(&probe_state(a)).unwrap();
                        gaussian_outside_prob(&out.marginal(Quadrature::P), 0.3, w)
                    })
                    .collect();
                let target = p_squeezed_fock(0.0, 0.3, 3.0, cutoff).unwrap();
                let phi = phi_estimate(&invert_for_effect(&f, &g).unwrap(), &target).unwrap();
                let vp = 0.5 * 10f64.powf(-0.3);
                let oracle = gaussian_outside_prob(
                    &GaussianDist::new(t.sqrt() * 0.3, t * vp + (1.0 - t) * 0.5).unwrap(),
                    0.3,
                    w,
                );
                assert!((phi.value - oracle).abs() <= phi.truncation_band, "{cutoff} {t}: {} vs {oracle}", phi.value);
            }
        }
    }
}
