//! Public messages exchanged over the authenticated classical channel.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// One public message. Each carries either bits or real values; the
/// payload counts feed the leak bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    /// `π` as the list `pi[i]` = position of oscillator `i` in the sent batch.
    Permutation { pi: Vec<usize> },
    /// `x_j` of every bit-check oscillator.
    BitCheckDisclosure { x: Vec<f64> },
    /// Centers `p_j` of the phase checks.
    TestCenters { p: Vec<f64> },
    /// Revealed within-interval remainders of the key oscillators.
    Remainders { values: Vec<f64> },
    /// Indices (into the key oscillators) sacrificed for verification, and
    /// both parties' bits on them.
    Verification {
        slice: usize,
        indices: Vec<usize>,
        alice_bits: Vec<u8>,
        bob_bits: Vec<u8>,
    },
    /// Syndromes `H1 k` of one slice, block after block.
    Syndromes { slice: usize, bits: Vec<Vec<u8>> },
    Gate {
        e_b: f64,
        phi: f64,
        rate: f64,
        pass: bool,
    },
    Conditioning { ratios: Vec<Option<f64>>, ok: bool },
}

/// Bits and values revealed by a transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LeakSummary {
    pub syndrome_bits: usize,
    pub verification_bits: usize,
    pub disclosed_values: usize,
    pub total: usize,
}

impl Message {
    /// Key-related payload size: bits of syndromes and verification, and
    /// the number of real values disclosed. Bookkeeping messages count zero.
    pub fn payload_size(&self) -> usize {
        match self {
            Message::BitCheckDisclosure { x } => x.len(),
            Message::TestCenters { p } => p.len(),
            Message::Remainders { values } => values.len(),
            Message::Verification { alice_bits, bob_bits, .. } => alice_bits.len() + bob_bits.len(),
            Message::Syndromes { bits, .. } => bits.iter().map(Vec::len).sum(),
            Message::Permutation { .. } | Message::Gate { .. } | Message::Conditioning { .. } => 0,
        }
    }

    fn reals(&self) -> Vec<f64> {
        match self {
            Message::BitCheckDisclosure { x } => x.clone(),
            Message::TestCenters { p } => p.clone(),
            Message::Remainders { values } => values.clone(),
            Message::Gate { e_b, phi, rate, .. } => vec![*e_b, *phi, *rate],
            Message::Conditioning { ratios, .. } => ratios.iter().flatten().cloned().collect(),
            _ => Vec::new(),
        }
    }
}

/// Ordered public record of a session.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub messages: Vec<Message>,
}

impl Transcript {
    pub fn push(&mut self, m: Message) {
        self.messages.push(m);
    }

    pub fn leak(&self) -> LeakSummary {
        let mut s = LeakSummary::default();
        for m in &self.messages {
            let n = m.payload_size();
            match m {
                Message::Syndromes { .. } => s.syndrome_bits += n,
                Message::Verification { .. } => s.verification_bits += n,
                _ => s.disclosed_values += n,
            }
            s.total += n;
        }
        s
    }

    /// Number of real values in the transcript that coincide bit for bit with
    /// one of `secret`.
    pub fn count_matches(&self, secret: &[f64]) -> usize {
        let set: HashSet<u64> = secret.iter().map(|v| v.to_bits()).collect();
        self.messages
            .iter()
            .flat_map(|m| m.reals())
            .filter(|v| set.contains(&v.to_bits()))
            .count()
    }

    /// Newline-delimited JSON, one message per line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&serde_json::to_string(m).expect("message serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> crate::Result<Self> {
        let messages = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| crate::Error::Parse(e.to_string())))
            .collect::<crate::Result<_>>()?;
        Ok(Transcript { messages })
    }
}
