//! Session orchestration: preparation, transmission, estimation of the bit
//! and phase error rates, the rate gate, reconciliation and privacy
//! amplification.
//!
//! Alice's batch holds `N` key states and `μ` bit-check states (coherent,
//! Gaussian modulated) followed by `M` copies of each of the `K` coherent
//! probes that stand in for the squeezed phase-check states.

mod config;
mod session;
mod transcript;

pub use config::{ConditioningPolicy, SessionConfig, SliceConfig, DEFAULT_ASYMMETRY};
pub use session::{
    alice_prepare, bitcheck_indicators, bob_measure, check_source_indistinguishability, collect_f_statistics,
    estimate_bit_error, permute, random_permutation, run_session, stream_rng, unpermute, BitErrorEstimate,
    ChannelEstimate, ConditioningReport, GateReport, GaussianEnsemble, OscillatorRecord, Outcome, PhaseCheckReport,
    PhaseReport, Role, SessionOutput, SessionReport, SliceReport, Stream,
};
pub use transcript::{LeakSummary, Message, Transcript};
