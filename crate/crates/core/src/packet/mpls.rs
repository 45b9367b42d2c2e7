//! MPLS label stack entries (RFC 3032).
//!
//! ```text
//!  0                   1                   2                   3
//!  0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |                Label                  | Exp |S|       TTL     |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! ```

use std::fmt;

pub const ETHERTYPE_MPLS_UNICAST: u16 = 0x8847;
pub const ETHERTYPE_MPLS_MULTICAST: u16 = 0x8848;

/// Size of one encoded label stack entry.
pub const LSE_LEN: usize = 4;

pub const LABEL_MAX: u32 = (1 << 20) - 1;
pub const EXP_MAX: u8 = 0b111;

/// Mask of the bottom-of-stack bit within the big-endian 32-bit word.
pub const S_BIT_MASK: u32 = 1 << 8;

#[inline]
pub fn is_mpls_ethertype(ethertype: u16) -> bool {
    ethertype == ETHERTYPE_MPLS_UNICAST || ethertype == ETHERTYPE_MPLS_MULTICAST
}

/// One MPLS label stack entry.
///
/// Values outside the bit widths are masked on encode, so construct through
/// [`MplsLse::new`] when the inputs are not already known to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MplsLse {
    pub label: u32,
    pub exp: u8,
    pub bottom_of_stack: bool,
    pub ttl: u8,
}

impl MplsLse {
    pub fn new(label: u32, exp: u8, bottom_of_stack: bool, ttl: u8) -> Self {
        MplsLse {
            label: label & LABEL_MAX,
            exp: exp & EXP_MAX,
            bottom_of_stack,
            ttl,
        }
    }

    pub fn from_word(word: u32) -> Self {
        MplsLse {
            label: word >> 12,
            exp: ((word >> 9) & 0x7) as u8,
            bottom_of_stack: word & S_BIT_MASK != 0,
            ttl: (word & 0xff) as u8,
        }
    }

    pub fn to_word(self) -> u32 {
        ((self.label & LABEL_MAX) << 12)
            | (u32::from(self.exp & EXP_MAX) << 9)
            | if self.bottom_of_stack { S_BIT_MASK } else { 0 }
            | u32::from(self.ttl)
    }

    pub fn encode(self) -> [u8; LSE_LEN] {
        self.to_word().to_be_bytes()
    }
}

/// Decodes one label stack entry from exactly four octets.
pub fn decode_lse(bytes: [u8; LSE_LEN]) -> MplsLse {
    MplsLse::from_word(u32::from_be_bytes(bytes))
}

impl fmt::Display for MplsLse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "label={} exp={} s={} ttl={}",
            self.label, self.exp, self.bottom_of_stack as u8, self.ttl
        )
    }
}
