//! Deterministic mutation engine.
//!
//! The stream is a pure function of the corpus and the budget: a ChaCha RNG
//! seeded from `budget.seed` picks the base frame, the strategy and its
//! parameters. Bit flips are not random; they sweep the bits of the chosen
//! frame in order, so a one-octet corpus yields all eight single-bit
//! variants in eight iterations.

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AttackError;
use crate::packet::mpls::{is_mpls_ethertype, LSE_LEN, S_BIT_MASK};
use crate::packet::{RawFrame, ETHERNET_HEADER_LEN, ETHERTYPE_IPV4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    BitFlip,
    ByteFlip,
    /// Cut the frame short, or shrink the IPv4 total-length field.
    LengthTruncate,
    /// Copy a short run of octets from another corpus frame at the same offset.
    FieldSplice,
    /// Insert copies of the top label stack entry with the bottom bit cleared.
    LseDuplicate,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::BitFlip,
        Strategy::ByteFlip,
        Strategy::LengthTruncate,
        Strategy::FieldSplice,
        Strategy::LseDuplicate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::BitFlip => "bitflip",
            Strategy::ByteFlip => "byteflip",
            Strategy::LengthTruncate => "length-truncate",
            Strategy::FieldSplice => "field-splice",
            Strategy::LseDuplicate => "lse-duplicate",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, AttackError> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| AttackError::InvalidSpec(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationBudget {
    pub iterations: u64,
    pub seed: u64,
    pub max_len: usize,
    pub strategies: BTreeSet<Strategy>,
}

impl MutationBudget {
    pub fn new(iterations: u64, seed: u64) -> Self {
        MutationBudget {
            iterations,
            seed,
            max_len: 65535,
            strategies: Strategy::ALL.into_iter().collect(),
        }
    }

    pub fn with_strategies(mut self, strategies: impl IntoIterator<Item = Strategy>) -> Self {
        self.strategies = strategies.into_iter().collect();
        self
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    fn validate(&self) -> Result<(), AttackError> {
        if self.strategies.is_empty() {
            return Err(AttackError::InvalidSpec("no mutation strategies".into()));
        }
        if self.max_len == 0 {
            return Err(AttackError::InvalidSpec("max_len must be positive".into()));
        }
        Ok(())
    }
}

/// Iterator over mutated frames.
#[derive(Debug, Clone)]
pub struct Mutator {
    corpus: Vec<Vec<u8>>,
    strategies: Vec<Strategy>,
    max_len: usize,
    remaining: u64,
    rng: ChaCha8Rng,
    bitflip_cursor: usize,
}

/// Mutation stream of `budget.iterations` frames over a non-empty corpus.
pub fn mutate(corpus: &[RawFrame], budget: &MutationBudget) -> Result<Mutator, AttackError> {
    budget.validate()?;
    let corpus: Vec<Vec<u8>> =
        corpus.iter().filter(|f| !f.is_empty()).map(|f| f.bytes().to_vec()).collect();
    if corpus.is_empty() {
        return Err(AttackError::EmptyCorpus);
    }
    Ok(Mutator {
        corpus,
        strategies: budget.strategies.iter().copied().collect(),
        max_len: budget.max_len,
        remaining: budget.iterations,
        rng: ChaCha8Rng::seed_from_u64(budget.seed),
        bitflip_cursor: 0,
    })
}

impl Iterator for Mutator {
    type Item = RawFrame;

    fn next(&mut self) -> Option<RawFrame> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let base = self.rng.random_range(0..self.corpus.len());
        let strategy = self.strategies[self.rng.random_range(0..self.strategies.len())];
        let mut frame = self.corpus[base].clone();
        self.apply(strategy, &mut frame);
        frame.truncate(self.max_len);
        Some(RawFrame::new(frame))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

impl Mutator {
    fn apply(&mut self, strategy: Strategy, frame: &mut Vec<u8>) {
        match strategy {
            Strategy::BitFlip => {
                let bit = self.bitflip_cursor % (frame.len() * 8);
                self.bitflip_cursor += 1;
                flip_bit(frame, bit);
            }
            Strategy::ByteFlip => self.byteflip(frame),
            Strategy::LengthTruncate => {
                let has_ipv4 = frame.len() >= ETHERNET_HEADER_LEN + 4
                    && u16::from_be_bytes([frame[12], frame[13]]) == ETHERTYPE_IPV4;
                if has_ipv4 && self.rng.random_bool(0.5) {
                    let current = u16::from_be_bytes([frame[16], frame[17]]);
                    let shrunk = if current == 0 { 0 } else { self.rng.random_range(0..current) };
                    frame[16..18].copy_from_slice(&shrunk.to_be_bytes());
                } else if frame.len() > 1 {
                    let keep = self.rng.random_range(1..frame.len());
                    frame.truncate(keep);
                } else {
                    self.byteflip(frame);
                }
            }
            Strategy::FieldSplice => {
                let donor = &self.corpus[self.rng.random_range(0..self.corpus.len())];
                let span = frame.len().min(donor.len());
                if span == 0 {
                    self.byteflip(frame);
                    return;
                }
                let start = self.rng.random_range(0..span);
                let len = self.rng.random_range(1..=8usize).min(span - start);
                frame[start..start + len].copy_from_slice(&donor[start..start + len]);
            }
            Strategy::LseDuplicate => {
                let copies = self.rng.random_range(1..=8usize);
                let mut applied = false;
                for _ in 0..copies {
                    applied |= duplicate_top_lse(frame);
                }
                if !applied {
                    self.byteflip(frame);
                }
            }
        }
    }

    fn byteflip(&mut self, frame: &mut [u8]) {
        let pos = self.rng.random_range(0..frame.len());
        let mask: u8 = self.rng.random_range(1..=255);
        frame[pos] ^= mask;
    }
}

/// Flips bit `bit` counting from the most significant bit of octet 0.
pub fn flip_bit(frame: &mut [u8], bit: usize) {
    frame[bit / 8] ^= 0x80 >> (bit % 8);
}

/// Inserts a copy of the top label stack entry, bottom bit cleared, in front
/// of the stack. Returns false when the frame carries no complete entry.
pub fn duplicate_top_lse(frame: &mut Vec<u8>) -> bool {
    let start = ETHERNET_HEADER_LEN;
    if frame.len() < start + LSE_LEN
        || !is_mpls_ethertype(u16::from_be_bytes([frame[12], frame[13]]))
    {
        return false;
    }
    let word = u32::from_be_bytes([frame[start], frame[start + 1], frame[start + 2], frame[start + 3]]);
    let copy = (word & !S_BIT_MASK).to_be_bytes();
    frame.splice(start..start, copy);
    true
}
