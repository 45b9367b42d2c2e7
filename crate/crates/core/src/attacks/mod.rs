//! Attack frames, label-stack payload encoding, and the mutation-based
//! differential fuzz harness.

mod craft;
mod fuzz;
mod mutate;

pub use craft::{
    craft, decode_payload, encode_payload, AttackKind, AttackSpec, ACL_BYPASS_DPORT,
    LONG_SHIM_FRAME_SIZE, SHORT_SHIM_FRAGMENT_LEN,
};
pub use fuzz::{diff_fuzz, minimize, Exemplar, FuzzReport, REFERENCE_SHELL_COMMAND};
pub use mutate::{duplicate_top_lse, flip_bit, mutate, MutationBudget, Mutator, Strategy};

use crate::packet::PacketError;

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error("payload of {len} octets exceeds the {capacity}-octet label stack")]
    PayloadTooLarge { len: usize, capacity: usize },
    #[error("payload chunk {chunk_index} has its bottom-of-stack bit set")]
    PayloadViolatesConstraint { chunk_index: usize },
    #[error("payload length {len} is not a multiple of 4")]
    PayloadMisaligned { len: usize },
    #[error("invalid attack spec: {0}")]
    InvalidSpec(String),
    #[error("fuzz corpus is empty")]
    EmptyCorpus,
    #[error("profiles must include hardened and at least one vulnerable profile")]
    InvalidProfiles,
    #[error(transparent)]
    Packet(#[from] PacketError),
}
