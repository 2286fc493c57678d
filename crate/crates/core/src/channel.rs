//! Channel models acting on Gaussian states, homodyne sampling and the
//! probabilities of the yes/no window effects Bob measures.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::math::{gaussian_outside_prob, loss_db_to_transmittance, GaussianDist, VACUUM_VARIANCE};

/// A single-mode Gaussian state with diagonal covariance. Variances are
/// absolute, so a coherent state has `var_x = var_p = 0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianModState {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
}

impl GaussianModState {
    pub fn coherent(x: f64, p: f64) -> Self {
        GaussianModState {
            mean_x: x,
            mean_p: p,
            var_x: VACUUM_VARIANCE,
            var_p: VACUUM_VARIANCE,
        }
    }

    pub fn mean(&self, q: Quadrature) -> f64 {
        match q {
            Quadrature::X => self.mean_x,
            Quadrature::P => self.mean_p,
        }
    }

    pub fn variance(&self, q: Quadrature) -> f64 {
        match q {
            Quadrature::X => self.var_x,
            Quadrature::P => self.var_p,
        }
    }

    /// Marginal distribution of a homodyne measurement of `q`.
    pub fn marginal(&self, q: Quadrature) -> GaussianDist {
        GaussianDist {
            mean: self.mean(q),
            variance: self.variance(q),
        }
    }

    pub fn is_physical(&self) -> bool {
        self.var_x > 0.0 && self.var_p > 0.0 && self.var_x * self.var_p >= VACUUM_VARIANCE * VACUUM_VARIANCE * (1.0 - 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomodyneOutcome {
    pub quadrature: Quadrature,
    pub value: f64,
}

/// Which quadrature an intercept-resend attacker measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisStrategy {
    #[default]
    Random,
    X,
    P,
}

/// Channel between Alice and Bob.
///
/// Beam-splitter style variants accept either `transmittance` or `loss_db`.
/// Excess noise is an absolute variance added at the output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelModel {
    Lossless,
    #[serde(rename = "beamsplitter")]
    BeamSplitter {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        transmittance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        loss_db: Option<f64>,
    },
    #[serde(rename = "noisy")]
    NoisyGaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        transmittance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        loss_db: Option<f64>,
        #[serde(default)]
        excess_x: f64,
        #[serde(default)]
        excess_p: f64,
    },
    InterceptResend {
        #[serde(default)]
        basis: BasisStrategy,
    },
}

fn resolve_t(transmittance: Option<f64>, loss_db: Option<f64>) -> Result<f64> {
    let t = match (transmittance, loss_db) {
        (Some(t), None) => t,
        (None, Some(db)) => {
            if !(db >= 0.0) {
                return domain(format!("loss must be nonnegative, got {db} dB"));
            }
            loss_db_to_transmittance(db)
        }
        (None, None) => 1.0,
        (Some(_), Some(_)) => return domain("give either transmittance or loss_db, not both"),
    };
    if !(t > 0.0 && t <= 1.0) {
        return domain(format!("transmittance must be in (0, 1], got {t}"));
    }
    Ok(t)
}

impl ChannelModel {
    pub fn beam_splitter(t: f64) -> Self {
        ChannelModel::BeamSplitter {
            transmittance: Some(t),
            loss_db: None,
        }
    }

    pub fn from_loss_db(db: f64) -> Self {
        ChannelModel::BeamSplitter {
            transmittance: None,
            loss_db: Some(db),
        }
    }

    pub fn noisy(t: f64, excess_x: f64, excess_p: f64) -> Self {
        ChannelModel::NoisyGaussian {
            transmittance: Some(t),
            loss_db: None,
            excess_x,
            excess_p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelModel::Lossless | ChannelModel::InterceptResend { .. } => Ok(()),
            ChannelModel::BeamSplitter { transmittance, loss_db } => resolve_t(transmittance, loss_db).map(|_| ()),
            ChannelModel::NoisyGaussian {
                transmittance,
                loss_db,
                excess_x,
                excess_p,
            } => {
                resolve_t(transmittance, loss_db)?;
                if !(excess_x >= 0.0 && excess_p >= 0.0) {
                    return domain("excess noise must be nonnegative");
                }
                Ok(())
            }
        }
    }

    /// Transmittance for the Gaussian variants, `None` for intercept-resend.
    pub fn transmittance(&self) -> Option<f64> {
        match *self {
            ChannelModel::Lossless => Some(1.0),
            ChannelModel::BeamSplitter { transmittance, loss_db }
            | ChannelModel::NoisyGaussian {
                transmittance, loss_db, ..
            } => resolve_t(transmittance, loss_db).ok(),
            ChannelModel::InterceptResend { .. } => None,
        }
    }

    fn excess(&self) -> (f64, f64) {
        match *self {
            ChannelModel::NoisyGaussian { excess_x, excess_p, .. } => (excess_x, excess_p),
            _ => (0.0, 0.0),
        }
    }

    /// Deterministic action of the Gaussian variants; `None` for
    /// intercept-resend, whose output depends on a measurement outcome.
    pub fn propagate_gaussian(&self, s: &GaussianModState) -> Option<GaussianModState> {
        let t = self.transmittance()?;
        if t == 1.0 && self.excess() == (0.0, 0.0) {
            return Some(*s);
        }
        let (ex, ep) = self.excess();
        let amp = t.sqrt();
        Some(GaussianModState {
            mean_x: s.mean_x * amp,
            mean_p: s.mean_p * amp,
            var_x: t * s.var_x + (1.0 - t) * VACUUM_VARIANCE + ex,
            var_p: t * s.var_p + (1.0 - t) * VACUUM_VARIANCE + ep,
        })
    }

    /// Amplitude gain and conditional output noise on quadrature `q` for a
    /// coherent input, when the channel is Gaussian.
    pub fn coherent_response(&self, q: Quadrature) -> Option<(f64, f64)> {
        let out = self.propagate_gaussian(&GaussianModState::coherent(0.0, 0.0))?;
        Some((self.transmittance()?.sqrt(), out.variance(q)))
    }
}

/// Sends `s` through `c`. Only intercept-resend draws from `rng`.
pub fn propagate<R: Rng + ?Sized>(s: &GaussianModState, c: &ChannelModel, rng: &mut R) -> GaussianModState {
    if let Some(out) = c.propagate_gaussian(s) {
        return out;
    }
    let ChannelModel::InterceptResend { basis } = *c else {
        unreachable!("non-Gaussian channel is intercept-resend")
    };
    let q = match basis {
        BasisStrategy::X => Quadrature::X,
        BasisStrategy::P => Quadrature::P,
        BasisStrategy::Random => {
            if rng.random::<bool>() {
                Quadrature::P
            } else {
                Quadrature::X
            }
        }
    };
    let v = homodyne_sample(s, q, rng).value;
    match q {
        Quadrature::X => GaussianModState::coherent(v, 0.0),
        Quadrature::P => GaussianModState::coherent(0.0, v),
    }
}

/// Homodyne measurement of `q`.
pub fn homodyne_sample<R: Rng + ?Sized>(s: &GaussianModState, q: Quadrature, rng: &mut R) -> HomodyneOutcome {
    let z: f64 = StandardNormal.sample(rng);
    HomodyneOutcome {
        quadrature: q,
        value: s.mean(q) + s.variance(q).sqrt() * z,
    }
}

/// Probability that a homodyne outcome on `q` falls outside
/// `[center - halfwidth, center + halfwidth]`.
pub fn effect_outside_prob(s: &GaussianModState, q: Quadrature, center: f64, halfwidth: f64) -> f64 {
    gaussian_outside_prob(&s.marginal(q), center, halfwidth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng) -> GaussianModState {
        let vx: f64 = rng.random_range(0.05..3.0);
        GaussianModState {
            mean_x: rng.random_range(-5.0..5.0),
            mean_p: rng.random_range(-5.0..5.0),
            var_x: vx,
            var_p: rng.random_range(0.25 / vx..4.0 / vx),
        }
    }

    #[test]
    fn lossless_and_unit_beam_splitter_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s = random_state(&mut rng);
            assert_eq!(propagate(&s, &ChannelModel::Lossless, &mut rng), s);
            assert_eq!(propagate(&s, &ChannelModel::beam_splitter(1.0), &mut rng), s);
        }
    }

    #[test]
    fn beam_splitter_examples() {
        let s = GaussianModState::coherent(1.0, -2.0);
        let t = loss_db_to_transmittance(1.4);
        let out = ChannelModel::beam_splitter(t).propagate_gaussian(&s).unwrap();
        assert!((out.mean_x - 0.8511).abs() < 1e-4);
        assert!((out.mean_p + 2.0 * 0.8511).abs() < 2e-4);
        assert_eq!(out.var_x, 0.5);
        assert_eq!(out.var_p, 0.5);

        let sq = GaussianModState {
            mean_x: 0.0,
            mean_p: 0.0,
            var_x: 2.5,
            var_p: 0.1,
        };
        let out = ChannelModel::beam_splitter(0.5).propagate_gaussian(&sq).unwrap();
        assert!((out.var_p - 0.3).abs() < 1e-15);
    }

    #[test]
    fn beam_splitters_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let s = random_state(&mut rng);
            let t1: f64 = rng.random_range(0.01..1.0);
            let t2: f64 = rng.random_range(0.01..1.0);
            let a = ChannelModel::beam_splitter(t1).propagate_gaussian(&s).unwrap();
            let a = ChannelModel::beam_splitter(t2).propagate_gaussian(&a).unwrap();
            let b = ChannelModel::beam_splitter(t1 * t2).propagate_gaussian(&s).unwrap();
            assert!((a.mean_x - b.mean_x).abs() < 1e-12);
            assert!((a.mean_p - b.mean_p).abs() < 1e-12);
            assert!((a.var_x - b.var_x).abs() < 1e-12);
            assert!((a.var_p - b.var_p).abs() < 1e-12);
            assert!(a.is_physical());
        }
    }

    #[test]
    fn coherent_variance_fixed_for_every_t() {
        for k in 1..=100 {
            let t = k as f64 / 100.0;
            let out = ChannelModel::beam_splitter(t)
                .propagate_gaussian(&GaussianModState::coherent(3.0, 1.0))
                .unwrap();
            assert!((out.var_x - VACUUM_VARIANCE).abs() < 1e-15);
            assert!((out.var_p - VACUUM_VARIANCE).abs() < 1e-15);
        }
    }

    #[test]
    fn noisy_adds_excess() {
        let out = ChannelModel::noisy(0.8, 0.1, 0.2)
            .propagate_gaussian(&GaussianModState::coherent(0.0, 0.0))
            .unwrap();
        assert!((out.var_x - 0.6).abs() < 1e-15);
        assert!((out.var_p - 0.7).abs() < 1e-15);
        assert_eq!(
            ChannelModel::noisy(0.8, 0.1, 0.2).coherent_response(Quadrature::X),
            Some((0.8f64.sqrt(), out.var_x))
        );
    }

    #[test]
    fn homodyne_deterministic_limit_and_seeding() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = GaussianModState {
            mean_x: 1.25,
            mean_p: 0.0,
            var_x: 1e-30,
            var_p: 1e30,
        };
        assert!((homodyne_sample(&s, Quadrature::X, &mut rng).value - 1.25).abs() < 1e-10);

        let v = GaussianModState::coherent(0.0, 0.0);
        let a: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            (0..100).map(|_| homodyne_sample(&v, Quadrature::P, &mut r).value).collect()
        };
        let b: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            (0..100).map(|_| homodyne_sample(&v, Quadrature::P, &mut r).value).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn vacuum_sample_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = GaussianModState::coherent(0.0, 0.0);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = homodyne_sample(&v, Quadrature::X, &mut rng).value;
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((var - 0.5).abs() < 0.003, "{var}");
    }

    #[test]
    fn effect_probability_examples() {
        let s = GaussianModState::coherent(0.4, -1.0);
        assert_eq!(effect_outside_prob(&s, Quadrature::X, 0.0, 0.0), 1.0);
        let w = std::f64::consts::PI.sqrt() / 2.0;
        let p = effect_outside_prob(&s, Quadrature::P, -1.0, w);
        assert!((p - 0.2103).abs() < 5e-4, "{p}");
        assert!((p - 2.0 * crate::math::normal_sf(w / 0.5f64.sqrt())).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| (homodyne_sample(&s, Quadrature::P, &mut rng).value + 1.0).abs() > w)
            .count();
        let freq = hits as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * sigma);

        let mut prev = 1.0;
        for k in 0..200 {
            let q = effect_outside_prob(&s, Quadrature::X, 0.1, k as f64 * 0.03);
            assert!(q <= prev);
            prev = q;
        }
    }

    #[test]
    fn intercept_resend_outputs_coherent_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = ChannelModel::InterceptResend { basis: BasisStrategy::X };
        let out = propagate(&GaussianModState::coherent(2.0, 3.0), &c, &mut rng);
        assert_eq!(out.mean_p, 0.0);
        assert_eq!(out.var_x, VACUUM_VARIANCE);
        assert!(c.transmittance().is_none());
    }

    #[test]
    fn channel_json_forms() {
        let c: ChannelModel = serde_json::from_str(r#"{"type": "beamsplitter", "loss_db": 0.7}"#).unwrap();
        assert!((c.transmittance().unwrap() - loss_db_to_transmittance(0.7)).abs() < 1e-15);
        let c: ChannelModel = serde_json::from_str(r#"{"type": "lossless"}"#).unwrap();
        assert_eq!(c, ChannelModel::Lossless);
        let c: ChannelModel = serde_json::from_str(r#"{"type": "intercept_resend"}"#).unwrap();
        assert_eq!(c, ChannelModel::InterceptResend { basis: BasisStrategy::Random });
        let c: ChannelModel = serde_json::from_str(r#"{"type": "noisy", "transmittance": 0.9, "excess_x": 0.05}"#).unwrap();
        assert!(c.validate().is_ok());
        let bad: ChannelModel = serde_json::from_str(r#"{"type": "beamsplitter", "transmittance": 1.5}"#).unwrap();
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<ChannelModel>(r#"{"type": "beamsplitter", "gain": 1}"#).is_err());
    }
}
