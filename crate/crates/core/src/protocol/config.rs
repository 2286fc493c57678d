//! Session configuration.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::channel::ChannelModel;
use crate::codes::{shipped_pair, NestedCodePair};
use crate::encoding::{DecodeRule, Labeling};
use crate::error::{Error, Result};
use crate::math::VACUUM_VARIANCE;

/// What to do when the truncation perturbation is not small against the
/// reconstructed signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditioningPolicy {
    /// Abort the session (exit code 3).
    #[default]
    Enforce,
    /// Record the diagnostic and continue.
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceConfig {
    pub m: usize,
    pub labeling: Labeling,
    pub rule: DecodeRule,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig {
            m: 1,
            labeling: Labeling::Binary,
            rule: DecodeRule::RemainderMap,
        }
    }
}

/// All parameters of one session. Every field has a default, so a config
/// file only needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Key oscillators `N`.
    pub n_key: usize,
    /// Bit-check oscillators `μ`.
    pub mu: usize,
    /// Probe count `K`; must equal `(cutoff + 1)²` when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_probes: Option<usize>,
    /// Copies `M` of each probe.
    pub m_copies: usize,
    /// Modulation variance in vacuum units.
    pub v_mod: f64,
    /// Pitch of the x lattice; the bit-check window half-width is half of it.
    pub spacing_x: f64,
    /// Pitch of the p lattice; the phase-check window half-width is half of it.
    pub spacing_p: f64,
    pub slices: SliceConfig,
    pub channel: ChannelModel,
    /// Name of a shipped nested code pair.
    pub code: String,
    /// Fock cutoff `𝒩`.
    pub cutoff: usize,
    pub eps_max: f64,
    /// Minimum signal-to-truncation ratio for the conditioning check.
    pub cond_ratio: f64,
    pub conditioning_policy: ConditioningPolicy,
    /// Largest acceptable condition number during probe design.
    pub probe_cond_max: f64,
    /// Seed of the probe design. The probe amplitudes are public protocol
    /// constants, so they do not change with the session seed.
    pub probe_seed: u64,
    /// Disclosed centers `p_j` of the squeezed check states.
    pub test_centers: Vec<f64>,
    /// Squeezing of the p-squeezed check states, in dB.
    pub check_squeezing_db: f64,
    /// Fraction of key oscillators sacrificed for verification.
    pub verification_fraction: f64,
    pub seed: u64,
}

/// Asymmetry giving the default lattice pitches `√π/α` and `√π·α`.
pub const DEFAULT_ASYMMETRY: f64 = 0.6;

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            n_key: 2000,
            mu: 1000,
            k_probes: None,
            m_copies: 50_000,
            v_mod: 31.0,
            spacing_x: PI.sqrt() / DEFAULT_ASYMMETRY,
            spacing_p: PI.sqrt() * DEFAULT_ASYMMETRY,
            slices: SliceConfig::default(),
            channel: ChannelModel::Lossless,
            code: "hamming74".into(),
            cutoff: 4,
            eps_max: 0.09,
            cond_ratio: 1.0,
            conditioning_policy: ConditioningPolicy::Enforce,
            probe_cond_max: 1e9,
            probe_seed: 0,
            test_centers: vec![0.0],
            check_squeezing_db: 6.0,
            verification_fraction: 0.5,
            seed: 1,
        }
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl SessionConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SessionConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Probe count `K = (𝒩 + 1)²`.
    pub fn k(&self) -> usize {
        (self.cutoff + 1) * (self.cutoff + 1)
    }

    /// Total oscillators `g = N + μ + K·M`.
    pub fn g(&self) -> usize {
        self.n_key + self.mu + self.k() * self.m_copies
    }

    /// Modulation variance as an absolute quadrature variance.
    pub fn v_mod_absolute(&self) -> f64 {
        self.v_mod * VACUUM_VARIANCE
    }

    pub fn code_pair(&self) -> Result<NestedCodePair> {
        shipped_pair(&self.code)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_key == 0 {
            return invalid("n_key must be at least 1");
        }
        if self.mu == 0 {
            return invalid("mu must be at least 1");
        }
        if self.m_copies == 0 {
            return invalid("m_copies must be at least 1");
        }
        if let Some(k) = self.k_probes {
            if k != self.k() {
                return invalid(format!("k_probes = {k} but cutoff {} needs {}", self.cutoff, self.k()));
            }
        }
        if !(self.v_mod > 0.0 && self.v_mod.is_finite()) {
            return invalid("v_mod must be positive");
        }
        for (name, s) in [("spacing_x", self.spacing_x), ("spacing_p", self.spacing_p)] {
            if !(s > 0.0 && s.is_finite()) {
                return invalid(format!("{name} must be positive"));
            }
        }
        if !(1..=8).contains(&self.slices.m) {
            return invalid("slices.m must be in 1..=8");
        }
        self.channel.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.code_pair()?;
        if !(self.eps_max > 0.0 && self.eps_max < 0.1) {
            return invalid("eps_max must lie in (0, 0.1)");
        }
        if !(self.cond_ratio >= 0.0) {
            return invalid("cond_ratio must be nonnegative");
        }
        if !(self.probe_cond_max > 1.0) {
            return invalid("probe_cond_max must exceed 1");
        }
        if self.test_centers.is_empty() || self.test_centers.iter().any(|c| !c.is_finite()) {
            return invalid("test_centers must be a nonempty list of finite values");
        }
        if !(self.check_squeezing_db > 0.0 && self.check_squeezing_db.is_finite()) {
            return invalid("check_squeezing_db must be positive");
        }
        if !(self.verification_fraction >= 0.0 && self.verification_fraction < 1.0) {
            return invalid("verification_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}
