//! Session steps and the orchestrator.

use num_complex::Complex64;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{ConditioningPolicy, SessionConfig};
use super::transcript::{LeakSummary, Message, Transcript};
use crate::channel::{homodyne_sample, propagate, GaussianModState, HomodyneOutcome, Quadrature};
use crate::codes::{syndrome, syndrome_decode};
use crate::encoding::{build_equiprobable_slices, decode_slice, slice_bits, slice_remainder, SliceMap, SliceRemainder};
use crate::error::{Error, Result};
use crate::fock::p_squeezed_fock;
use crate::math::{GaussianDist, VACUUM_VARIANCE};
use crate::phase::{aggregate_phase_error, build_gamma, design_probes, estimate_check, probe_state, ProbeSet};
use crate::rates::css_rate;

/// Independent random streams of a session, one per purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    ProbeDesign = 0,
    Preparation = 1,
    Permutation = 2,
    Channel = 3,
    Measurement = 4,
    Verification = 5,
}

pub fn stream_rng(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

/// What an oscillator is used for, fixed by its position after Bob undoes
/// the permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Role {
    Key,
    Bitcheck,
    Probe { k: usize, m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorRecord {
    pub role: Role,
    pub alice_true: (f64, f64),
    pub disclosed: Option<f64>,
    pub bob_outcome: Option<HomodyneOutcome>,
}

/// Prepares the `N + μ` modulated coherent states followed by `M` copies of
/// each of the `K` probes, in role order.
pub fn alice_prepare<R: Rng + ?Sized>(
    cfg: &SessionConfig,
    probes: &ProbeSet,
    rng: &mut R,
) -> (Vec<GaussianModState>, Vec<OscillatorRecord>) {
    let modulation = Normal::new(0.0, cfg.v_mod_absolute().sqrt()).expect("positive variance");
    let g = cfg.n_key + cfg.mu + probes.k() * probes.copies_per_probe;
    let mut states = Vec::with_capacity(g);
    let mut records = Vec::with_capacity(g);
    for i in 0..cfg.n_key + cfg.mu {
        let x = modulation.sample(rng);
        let p = modulation.sample(rng);
        let key = i < cfg.n_key;
        states.push(GaussianModState::coherent(x, p));
        records.push(OscillatorRecord {
            role: if key { Role::Key } else { Role::Bitcheck },
            alice_true: (x, p),
            disclosed: (!key).then_some(x),
            bob_outcome: None,
        });
    }
    for (k, &a) in probes.alphas.iter().enumerate() {
        let s = probe_state(a);
        for m in 0..probes.copies_per_probe {
            states.push(s);
            records.push(OscillatorRecord {
                role: Role::Probe { k, m },
                alice_true: (s.mean_x, s.mean_p),
                disclosed: None,
                bob_outcome: None,
            });
        }
    }
    (states, records)
}

/// A uniformly random element of `Sym(g)`.
pub fn random_permutation<R: Rng + ?Sized>(g: usize, rng: &mut R) -> Vec<usize> {
    let mut pi: Vec<usize> = (0..g).collect();
    pi.shuffle(rng);
    pi
}

fn check_permutation(len: usize, pi: &[usize]) -> Result<()> {
    if pi.len() != len {
        return Err(Error::LengthMismatch {
            expected: len,
            got: pi.len(),
        });
    }
    let mut seen = vec![false; len];
    for &j in pi {
        if j >= len || std::mem::replace(&mut seen[j], true) {
            return Err(Error::Domain("not a permutation".into()));
        }
    }
    Ok(())
}

/// Moves item `i` to position `pi[i]`.
pub fn permute<T: Clone>(batch: &[T], pi: &[usize]) -> Result<Vec<T>> {
    check_permutation(batch.len(), pi)?;
    let mut out: Vec<Option<T>> = vec![None; batch.len()];
    for (i, item) in batch.iter().enumerate() {
        out[pi[i]] = Some(item.clone());
    }
    Ok(out.into_iter().map(|o| o.expect("permutation is onto")).collect())
}

/// Inverse of [`permute`].
pub fn unpermute<T: Clone>(batch: &[T], pi: &[usize]) -> Result<Vec<T>> {
    check_permutation(batch.len(), pi)?;
    Ok(pi.iter().map(|&j| batch[j].clone()).collect())
}

/// Homodyne measurements: x on key and bit-check oscillators, p on probes.
pub fn bob_measure<R: Rng + ?Sized>(
    received: &[GaussianModState],
    records: &mut [OscillatorRecord],
    rng: &mut R,
) -> Result<Vec<HomodyneOutcome>> {
    if received.len() != records.len() {
        return Err(Error::LengthMismatch {
            expected: records.len(),
            got: received.len(),
        });
    }
    Ok(received
        .iter()
        .zip(records.iter_mut())
        .map(|(s, r)| {
            let q = match r.role {
                Role::Key | Role::Bitcheck => Quadrature::X,
                Role::Probe { .. } => Quadrature::P,
            };
            let out = homodyne_sample(s, q, rng);
            r.bob_outcome = Some(out);
            out
        })
        .collect())
}

/// Bit-error indicators `e_b(j)`: 1 when Bob's x lies more than `halfwidth`
/// from the disclosed `x_j`.
pub fn bitcheck_indicators(records: &[OscillatorRecord], halfwidth: f64) -> Result<Vec<u8>> {
    records
        .iter()
        .filter(|r| r.role == Role::Bitcheck)
        .map(|r| match (r.disclosed, r.bob_outcome) {
            (Some(x), Some(o)) => Ok(((o.value - x).abs() > halfwidth) as u8),
            _ => Err(Error::Domain("bit-check oscillator without disclosure or outcome".into())),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitErrorEstimate {
    pub e_b: f64,
    /// Normal-approximation 95% half-width of the binomial proportion.
    pub half_width: f64,
    pub mu: usize,
}

pub fn estimate_bit_error(indicators: &[u8]) -> Result<BitErrorEstimate> {
    if indicators.is_empty() {
        return Err(Error::Domain("no bit-check outcomes".into()));
    }
    let mu = indicators.len();
    let e = indicators.iter().map(|&b| b as f64).sum::<f64>() / mu as f64;
    Ok(BitErrorEstimate {
        e_b: e,
        half_width: 1.96 * (e * (1.0 - e) / mu as f64).sqrt(),
        mu,
    })
}

/// `F(j, k)`: fraction of probe-`k` outcomes with `|p - p_j| > halfwidth`.
pub fn collect_f_statistics(
    records: &[OscillatorRecord],
    centers: &[f64],
    halfwidth: f64,
    k_probes: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut hits = vec![vec![0u64; k_probes]; centers.len()];
    let mut counts = vec![0u64; k_probes];
    for r in records {
        let Role::Probe { k, .. } = r.role else { continue };
        if k >= k_probes {
            return Err(Error::Domain(format!("probe index {k} out of range")));
        }
        let o = r
            .bob_outcome
            .ok_or_else(|| Error::Domain("probe oscillator without outcome".into()))?;
        counts[k] += 1;
        for (j, &c) in centers.iter().enumerate() {
            hits[j][k] += ((o.value - c).abs() > halfwidth) as u64;
        }
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Domain(format!("no outcomes for probe {k}")));
    }
    Ok(hits
        .into_iter()
        .map(|row| row.iter().zip(&counts).map(|(&h, &c)| h as f64 / c as f64).collect())
        .collect())
}

/// Gaussian mixture of Gaussian states: displacements drawn from
/// `N(mean, modulation)` per quadrature, each state with variance `state`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianEnsemble {
    pub mean: [f64; 2],
    pub modulation: [f64; 2],
    pub state: [f64; 2],
}

impl GaussianEnsemble {
    pub fn coherent(v_mod: f64) -> Self {
        GaussianEnsemble {
            mean: [0.0; 2],
            modulation: [v_mod; 2],
            state: [VACUUM_VARIANCE; 2],
        }
    }

    /// Squeezed states `(var_x, var_p)` whose modulation is adjusted by
    /// `0.5 - var` per quadrature so the average state matches a coherent
    /// ensemble of modulation `v_mod`. `None` when that would need a
    /// negative modulation.
    pub fn matched_squeezed(v_mod: f64, var_x: f64, var_p: f64) -> Option<Self> {
        let mx = v_mod + (VACUUM_VARIANCE - var_x);
        let mp = v_mod + (VACUUM_VARIANCE - var_p);
        (mx >= 0.0 && mp >= 0.0).then_some(GaussianEnsemble {
            mean: [0.0; 2],
            modulation: [mx, mp],
            state: [var_x, var_p],
        })
    }

    pub fn covariance(&self) -> [f64; 2] {
        [self.modulation[0] + self.state[0], self.modulation[1] + self.state[1]]
    }
}

/// The average states agree iff their first two moments do.
pub fn check_source_indistinguishability(coh: &GaussianEnsemble, sq: &GaussianEnsemble) -> bool {
    let (a, b) = (coh.covariance(), sq.covariance());
    (0..2).all(|q| (coh.mean[q] - sq.mean[q]).abs() <= 1e-9 && (a[q] - b[q]).abs() <= 1e-9)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Key,
    GateAbort,
    ConditioningAbort,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Key => 0,
            Outcome::GateAbort => 2,
            Outcome::ConditioningAbort => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCheckReport {
    pub center: f64,
    pub phi: f64,
    pub phi_raw: f64,
    pub statistical_sigma: f64,
    pub truncation_band: f64,
    pub conditioning_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phi: f64,
    pub checks: Vec<PhaseCheckReport>,
    pub probe_alphas: Vec<Complex64>,
    pub gamma_condition_number: f64,
    pub max_probe_deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub policy: ConditioningPolicy,
    pub ratio_min: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub e_b: f64,
    pub phi: f64,
    pub rate: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub slice: usize,
    /// Raw bit error on the verification subset.
    pub e_b: Option<f64>,
    pub e_p: f64,
    pub rate: Option<f64>,
    pub blocks: usize,
    /// Bits still differing after syndrome decoding.
    pub residual_errors: usize,
}

/// Bob's linear fit `y = gain·x + noise` on the bit-check data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    pub gain: f64,
    pub noise_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub seed: u64,
    pub outcome: Outcome,
    pub bit_error: BitErrorEstimate,
    pub phase: PhaseReport,
    pub conditioning: ConditioningReport,
    pub gate: GateReport,
    pub channel_estimate: ChannelEstimate,
    pub slices: Vec<SliceReport>,
    pub key_alice: String,
    pub key_bob: String,
    pub key_length: usize,
    pub key_agreement: bool,
    pub leak: LeakSummary,
    /// Transcript values equal to a key-oscillator x value (must be zero).
    pub key_value_leaks: usize,
    pub sources_indistinguishable: bool,
    pub config: SessionConfig,
}

impl SessionReport {
    pub fn exit_code(&self) -> i32 {
        self.outcome.exit_code()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutput {
    pub report: SessionReport,
    pub transcript: Transcript,
}

fn regress(records: &[OscillatorRecord]) -> ChannelEstimate {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.role == Role::Bitcheck)
        .filter_map(|r| Some((r.disclosed?, r.bob_outcome?.value)))
        .collect();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let gain = if sxx > 0.0 { sxy / sxx } else { 1.0 };
    let dof = pts.len().saturating_sub(1).max(1) as f64;
    let noise = pts.iter().map(|p| (p.1 - gain * p.0).powi(2)).sum::<f64>() / dof;
    ChannelEstimate {
        gain,
        noise_variance: noise.max(1e-6),
    }
}

fn bits_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}

/// Runs one session end to end: prepare, permute, transmit, unpermute,
/// measure, estimate `e_b` and `Φ`, gate on the rate, then reconcile and
/// amplify slice by slice.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionOutput> {
    cfg.validate()?;
    let pair = cfg.code_pair()?;
    let mut transcript = Transcript::default();

    let probes = design_probes(cfg.cutoff, cfg.eps_max, cfg.probe_cond_max, &mut stream_rng(cfg.probe_seed, Stream::ProbeDesign))?
        .with_copies(cfg.m_copies);
    let gamma = build_gamma(&probes);

    let (states, mut records) = alice_prepare(cfg, &probes, &mut stream_rng(cfg.seed, Stream::Preparation));
    let pi = random_permutation(states.len(), &mut stream_rng(cfg.seed, Stream::Permutation));
    let sent = permute(&states, &pi)?;
    let mut channel_rng = stream_rng(cfg.seed, Stream::Channel);
    let received: Vec<GaussianModState> = sent.iter().map(|s| propagate(s, &cfg.channel, &mut channel_rng)).collect();
    transcript.push(Message::Permutation { pi: pi.clone() });
    let received = unpermute(&received, &pi)?;

    let bitcheck_x: Vec<f64> = records
        .iter()
        .filter(|r| r.role == Role::Bitcheck)
        .filter_map(|r| r.disclosed)
        .collect();
    transcript.push(Message::BitCheckDisclosure { x: bitcheck_x });
    transcript.push(Message::TestCenters {
        p: cfg.test_centers.clone(),
    });

    bob_measure(&received, &mut records, &mut stream_rng(cfg.seed, Stream::Measurement))?;

    // bit errors
    let bit_error = estimate_bit_error(&bitcheck_indicators(&records, 0.5 * cfg.spacing_x)?)?;

    // phase errors
    let halfwidth_p = 0.5 * cfg.spacing_p;
    let f = collect_f_statistics(&records, &cfg.test_centers, halfwidth_p, probes.k())?;
    let mut checks = Vec::with_capacity(cfg.test_centers.len());
    for (row, &c) in f.into_iter().zip(&cfg.test_centers) {
        let target = p_squeezed_fock(0.0, c, cfg.check_squeezing_db, cfg.cutoff)?;
        let est = estimate_check(&gamma, row, cfg.m_copies, &target)?;
        checks.push(PhaseCheckReport {
            center: c,
            phi: est.phi.value,
            phi_raw: est.phi.raw,
            statistical_sigma: est.statistical_sigma,
            truncation_band: est.phi.truncation_band,
            conditioning_ratio: est.conditioning_ratio,
        });
    }
    let phi = aggregate_phase_error(&checks.iter().map(|c| c.phi).collect::<Vec<_>>())?;
    let cond_ok = checks
        .iter()
        .all(|c| c.conditioning_ratio.is_some_and(|r| r >= cfg.cond_ratio));
    transcript.push(Message::Conditioning {
        ratios: checks.iter().map(|c| c.conditioning_ratio).collect(),
        ok: cond_ok,
    });
    let phase = PhaseReport {
        phi,
        checks,
        probe_alphas: probes.alphas.clone(),
        gamma_condition_number: gamma.condition_number,
        max_probe_deficit: probes.max_deficit(),
    };
    let conditioning = ConditioningReport {
        policy: cfg.conditioning_policy,
        ratio_min: cfg.cond_ratio,
        ok: cond_ok,
    };

    let rate = css_rate(bit_error.e_b, phi)?;
    let gate = GateReport {
        e_b: bit_error.e_b,
        phi,
        rate,
        pass: rate > 0.0,
    };
    let channel_estimate = regress(&records);
    let var_p = VACUUM_VARIANCE * 10f64.powf(-cfg.check_squeezing_db / 10.0);
    let sources_indistinguishable = GaussianEnsemble::matched_squeezed(cfg.v_mod_absolute(), 0.25 / var_p, var_p)
        .is_some_and(|sq| check_source_indistinguishability(&GaussianEnsemble::coherent(cfg.v_mod_absolute()), &sq));

    let key_x: Vec<f64> = records.iter().filter(|r| r.role == Role::Key).map(|r| r.alice_true.0).collect();
    let mut report = SessionReport {
        seed: cfg.seed,
        outcome: Outcome::Key,
        bit_error,
        phase,
        conditioning,
        gate,
        channel_estimate,
        slices: Vec::new(),
        key_alice: String::new(),
        key_bob: String::new(),
        key_length: 0,
        key_agreement: false,
        leak: LeakSummary::default(),
        key_value_leaks: 0,
        sources_indistinguishable,
        config: cfg.clone(),
    };

    let finish = |mut report: SessionReport, transcript: Transcript| {
        report.leak = transcript.leak();
        report.key_value_leaks = transcript.count_matches(&key_x);
        SessionOutput { report, transcript }
    };

    if !cond_ok && cfg.conditioning_policy == ConditioningPolicy::Enforce {
        report.outcome = Outcome::ConditioningAbort;
        return Ok(finish(report, transcript));
    }
    transcript.push(Message::Gate {
        e_b: gate.e_b,
        phi,
        rate,
        pass: gate.pass,
    });
    if !gate.pass {
        report.outcome = Outcome::GateAbort;
        return Ok(finish(report, transcript));
    }

    // sliced key with revealed remainders
    let slices = build_equiprobable_slices(cfg.v_mod_absolute().sqrt(), cfg.slices.m, cfg.slices.labeling)?;
    let key_y: Vec<f64> = records
        .iter()
        .filter(|r| r.role == Role::Key)
        .map(|r| r.bob_outcome.map(|o| o.value).unwrap_or(f64::NAN))
        .collect();
    let alice_bits: Vec<Vec<u8>> = key_x.iter().map(|&x| slice_bits(x, &slices)).collect();
    let remainders: Vec<SliceRemainder> = key_x.iter().map(|&x| slice_remainder(x, &slices)).collect();
    transcript.push(Message::Remainders {
        values: remainders.iter().map(|r| r.0).collect(),
    });

    let n_ver = (cfg.verification_fraction * cfg.n_key as f64).floor() as usize;
    let mut ver = index::sample(&mut stream_rng(cfg.seed, Stream::Verification), cfg.n_key, n_ver).into_vec();
    ver.sort_unstable();
    let mut is_ver = vec![false; cfg.n_key];
    for &i in &ver {
        is_ver[i] = true;
    }
    let key_idx: Vec<usize> = (0..cfg.n_key).filter(|&i| !is_ver[i]).collect();
    let n = pair.n();
    let blocks = key_idx.len() / n;

    let noise = GaussianDist::new(0.0, channel_estimate.noise_variance)?;
    // Bob's view of the lower slices: Alice's bits where they were revealed
    // during verification, his corrected bits elsewhere
    let mut bob_lower: Vec<Vec<u8>> = vec![Vec::new(); cfg.n_key];
    let mut key_a = Vec::new();
    let mut key_b = Vec::new();
    for i in 1..=cfg.slices.m {
        let raw: Vec<u8> = (0..cfg.n_key)
            .map(|o| decode_bit(cfg, &slices, key_y[o], i, &bob_lower[o], remainders[o], &noise, channel_estimate.gain))
            .collect::<Result<_>>()?;
        let a_ver: Vec<u8> = ver.iter().map(|&o| alice_bits[o][i - 1]).collect();
        let b_ver: Vec<u8> = ver.iter().map(|&o| raw[o]).collect();
        let e_b = (!ver.is_empty())
            .then(|| a_ver.iter().zip(&b_ver).filter(|(a, b)| a != b).count() as f64 / ver.len() as f64);
        transcript.push(Message::Verification {
            slice: i,
            indices: ver.clone(),
            alice_bits: a_ver,
            bob_bits: b_ver,
        });

        let mut syndromes = Vec::with_capacity(blocks);
        let mut residual = 0;
        let mut corrected = raw.clone();
        for b in 0..blocks {
            let idx = &key_idx[b * n..(b + 1) * n];
            let a: Vec<u8> = idx.iter().map(|&o| alice_bits[o][i - 1]).collect();
            let v: Vec<u8> = idx.iter().map(|&o| raw[o]).collect();
            let xi = syndrome(&pair.h1, &a)?;
            let fixed = syndrome_decode(&v, &xi, &pair.h1)?;
            residual += a.iter().zip(&fixed).filter(|(x, y)| x != y).count();
            key_a.extend(pair.secret_bits(&a)?);
            key_b.extend(pair.secret_bits(&fixed)?);
            for (&o, &bit) in idx.iter().zip(&fixed) {
                corrected[o] = bit;
            }
            syndromes.push(xi);
        }
        transcript.push(Message::Syndromes { slice: i, bits: syndromes });
        for o in 0..cfg.n_key {
            let bit = if is_ver[o] { alice_bits[o][i - 1] } else { corrected[o] };
            bob_lower[o].push(bit);
        }
        report.slices.push(SliceReport {
            slice: i,
            e_b,
            e_p: phi,
            rate: e_b.map(|e| css_rate(e, phi)).transpose()?,
            blocks,
            residual_errors: residual,
        });
    }
    report.key_alice = bits_string(&key_a);
    report.key_bob = bits_string(&key_b);
    report.key_length = key_a.len();
    report.key_agreement = key_a == key_b;
    Ok(finish(report, transcript))
}

#[allow(clippy::too_many_arguments)]
fn decode_bit(
    cfg: &SessionConfig,
    s: &SliceMap,
    y: f64,
    i: usize,
    lower: &[u8],
    rem: SliceRemainder,
    noise: &GaussianDist,
    gain: f64,
) -> Result<u8> {
    decode_slice(cfg.slices.rule, y, i, lower, Some(rem), s, noise, gain)
}
