//! Flow extraction.
//!
//! [`extract`] turns a frame into a [`FlowKey`]. The `Hardened` personality
//! is an ordinary bounds-checked parser. The three vulnerable personalities
//! each reproduce one historical Open vSwitch parsing bug, but they run
//! against a [`MemoryModel`] that records the out-of-bounds access as a
//! [`CorruptionEvent`] instead of performing it:
//!
//! | mode      | trigger                                              | event                |
//! |-----------|------------------------------------------------------|----------------------|
//! | `Vuln232` | more than `label_limit` entries, none bottom-of-stack | `StackOverflowWrite` |
//! | `Vuln240` | label stack ends in a fragment shorter than 4 octets  | `ShortLseOverflow`   |
//! | `Vuln250` | IPv4 `total_length` smaller than the header length    | `HeapOverread`       |
//!
//! Every personality handles the triggers of the other two exactly like
//! `Hardened` does, except that vulnerable personalities never drop.

use std::fmt;

use crate::packet::ipv4::is_well_formed;
use crate::packet::mpls::{is_mpls_ethertype, LSE_LEN};
use crate::packet::{
    decode_lse, EthernetHeader, FlowKey, Ipv4Header, MplsLse, ParseStatus, PortId, RawFrame,
    ETHERNET_HEADER_LEN, ETHERTYPE_IPV4, IPPROTO_TCP, IPPROTO_UDP,
};

pub const DEFAULT_LABEL_LIMIT: u32 = 3;
pub const DEFAULT_ADJACENT_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParserMode {
    Hardened,
    /// Unbounded label stack copy (Open vSwitch 2.3.2).
    Vuln232,
    /// Short trailing label stack entry (Open vSwitch 2.4.0).
    Vuln240,
    /// IPv4 total-length underflow (Open vSwitch 2.5.0).
    Vuln250,
}

impl ParserMode {
    pub const ALL: [ParserMode; 4] =
        [ParserMode::Hardened, ParserMode::Vuln232, ParserMode::Vuln240, ParserMode::Vuln250];

    pub fn as_str(self) -> &'static str {
        match self {
            ParserMode::Hardened => "hardened",
            ParserMode::Vuln232 => "v232",
            ParserMode::Vuln240 => "v240",
            ParserMode::Vuln250 => "v250",
        }
    }

    pub fn is_vulnerable(self) -> bool {
        self != ParserMode::Hardened
    }
}

impl fmt::Display for ParserMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ParserMode {
    type Err = ExtractError;

    fn from_str(s: &str) -> Result<Self, ExtractError> {
        match s.to_ascii_lowercase().as_str() {
            "hardened" => Ok(ParserMode::Hardened),
            "v232" | "vuln232" => Ok(ParserMode::Vuln232),
            "v240" | "vuln240" => Ok(ParserMode::Vuln240),
            "v250" | "vuln250" => Ok(ParserMode::Vuln250),
            _ => Err(ExtractError::UnknownMode(s.to_string())),
        }
    }
}

/// Contents of the simulated memory lying past the end of the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AdjacentFill {
    #[default]
    Zeros,
    /// Pseudo-random bytes derived from the seed.
    Seeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParserProfile {
    pub mode: ParserMode,
    label_limit: u32,
    pub adjacent_len: usize,
    pub adjacent_fill: AdjacentFill,
}

impl ParserProfile {
    pub fn new(mode: ParserMode) -> Self {
        ParserProfile {
            mode,
            label_limit: DEFAULT_LABEL_LIMIT,
            adjacent_len: DEFAULT_ADJACENT_LEN,
            adjacent_fill: AdjacentFill::Zeros,
        }
    }

    pub fn hardened() -> Self {
        Self::new(ParserMode::Hardened)
    }

    pub fn with_label_limit(mut self, label_limit: u32) -> Result<Self, ExtractError> {
        if label_limit == 0 {
            return Err(ExtractError::InvalidLabelLimit);
        }
        self.label_limit = label_limit;
        Ok(self)
    }

    pub fn with_adjacent(mut self, len: usize, fill: AdjacentFill) -> Self {
        self.adjacent_len = len;
        self.adjacent_fill = fill;
        self
    }

    pub fn label_limit(&self) -> u32 {
        self.label_limit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CorruptionKind {
    StackOverflowWrite,
    ShortLseOverflow,
    HeapOverread,
}

/// One modeled memory-safety violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CorruptionEvent {
    pub kind: CorruptionKind,
    /// Octets between the end of the valid region and the start of the access.
    pub offset: usize,
    /// Always at least 1.
    pub byte_count: usize,
    pub profile: ParserProfile,
}

impl fmt::Display for CorruptionEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} offset={} byte_count={} profile={}",
            self.kind, self.offset, self.byte_count, self.profile.mode
        )
    }
}

/// Vulnerability class a set of events belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VulnClass {
    Benign,
    LongStack232,
    ShortLse240,
    IpUnderflow250,
}

impl VulnClass {
    pub const FINDINGS: [VulnClass; 3] =
        [VulnClass::LongStack232, VulnClass::ShortLse240, VulnClass::IpUnderflow250];

    pub fn label(self) -> &'static str {
        match self {
            VulnClass::Benign => "Benign",
            VulnClass::LongStack232 => "LongStack-2.3.2",
            VulnClass::ShortLse240 => "ShortLse-2.4.0",
            VulnClass::IpUnderflow250 => "IpUnderflow-2.5.0",
        }
    }
}

impl fmt::Display for VulnClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl From<CorruptionKind> for VulnClass {
    fn from(kind: CorruptionKind) -> Self {
        match kind {
            CorruptionKind::StackOverflowWrite => VulnClass::LongStack232,
            CorruptionKind::ShortLseOverflow => VulnClass::ShortLse240,
            CorruptionKind::HeapOverread => VulnClass::IpUnderflow250,
        }
    }
}

/// Class of the first event; `Benign` when there are none. A single
/// extraction never mixes kinds.
pub fn classify_events(events: &[CorruptionEvent]) -> VulnClass {
    events.first().map_or(VulnClass::Benign, |e| e.kind.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Accept,
    Drop,
}

/// Out-of-bounds traffic observed by a [`MemoryModel`], in octets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MemoryAccounting {
    pub out_of_bounds_reads: usize,
    pub out_of_bounds_writes: usize,
}

impl MemoryAccounting {
    pub fn is_zero(&self) -> bool {
        self.out_of_bounds_reads == 0 && self.out_of_bounds_writes == 0
    }
}

/// The fixed-capacity label stack buffer plus whatever lies past the frame.
///
/// Writes beyond the stack capacity and reads beyond the frame are counted
/// and never performed on real memory.
#[derive(Debug, Clone)]
pub struct MemoryModel {
    pub stack_capacity_slots: u32,
    pub stack_written_slots: u32,
    adjacent_len: usize,
    adjacent_fill: AdjacentFill,
    accounting: MemoryAccounting,
}

impl MemoryModel {
    pub fn new(profile: &ParserProfile) -> Self {
        MemoryModel {
            stack_capacity_slots: profile.label_limit,
            stack_written_slots: 0,
            adjacent_len: profile.adjacent_len,
            adjacent_fill: profile.adjacent_fill,
            accounting: MemoryAccounting::default(),
        }
    }

    /// Byte `index` of the adjacent region; zero beyond its configured length.
    pub fn adjacent_byte(&self, index: usize) -> u8 {
        if index >= self.adjacent_len {
            return 0;
        }
        match self.adjacent_fill {
            AdjacentFill::Zeros => 0,
            AdjacentFill::Seeded(seed) => {
                (splitmix64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)) >> 56) as u8
            }
        }
    }

    pub fn adjacent_region(&self) -> Vec<u8> {
        (0..self.adjacent_len).map(|i| self.adjacent_byte(i)).collect()
    }

    /// Unchecked read of `N` octets at `pos`: frame bytes first, then the
    /// adjacent region. Octets past the frame are counted.
    pub fn read<const N: usize>(&mut self, frame: &[u8], pos: usize) -> [u8; N] {
        let mut out = [0u8; N];
        for (i, slot) in out.iter_mut().enumerate() {
            let at = pos + i;
            *slot = match frame.get(at) {
                Some(b) => *b,
                None => {
                    self.accounting.out_of_bounds_reads += 1;
                    self.adjacent_byte(at - frame.len())
                }
            };
        }
        out
    }

    /// Stores one label stack entry; slots past capacity count as overflow.
    pub fn write_stack_slot(&mut self) {
        if self.stack_written_slots >= self.stack_capacity_slots {
            self.accounting.out_of_bounds_writes += LSE_LEN;
        }
        self.stack_written_slots += 1;
    }

    pub fn overflowed(&self) -> bool {
        self.stack_written_slots > self.stack_capacity_slots
    }

    pub fn accounting(&self) -> MemoryAccounting {
        self.accounting
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct ExtractionResult {
    pub key: FlowKey,
    pub events: Vec<CorruptionEvent>,
    pub verdict: Verdict,
    pub memory: MemoryAccounting,
}

impl ExtractionResult {
    pub fn class(&self) -> VulnClass {
        classify_events(&self.events)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("frame is empty")]
    EmptyFrame,
    #[error("label limit must be at least 1")]
    InvalidLabelLimit,
    #[error("unknown parser profile `{0}`")]
    UnknownMode(String),
}

struct Extraction<'a> {
    bytes: &'a [u8],
    profile: ParserProfile,
    mem: MemoryModel,
    events: Vec<CorruptionEvent>,
}

impl Extraction<'_> {
    fn event(&mut self, kind: CorruptionKind, offset: usize, byte_count: usize) {
        debug_assert!(byte_count >= 1);
        self.events.push(CorruptionEvent { kind, offset, byte_count, profile: self.profile });
    }

    fn walk_label_stack(&mut self, key: &mut FlowKey) {
        let limit = self.profile.label_limit;
        let mut pos = ETHERNET_HEADER_LEN;
        let mut complete = 0u32;
        let mut terminated = false;
        let mut fragment = 0usize;

        while pos < self.bytes.len() {
            let remaining = self.bytes.len() - pos;
            if remaining < LSE_LEN {
                fragment = remaining;
                break;
            }
            let lse = decode_lse([
                self.bytes[pos],
                self.bytes[pos + 1],
                self.bytes[pos + 2],
                self.bytes[pos + 3],
            ]);
            key.mpls_top.get_or_insert(lse);
            complete += 1;
            if complete <= limit {
                self.mem.write_stack_slot();
            }
            pos += LSE_LEN;
            if lse.bottom_of_stack {
                terminated = true;
                break;
            }
        }

        if self.profile.mode == ParserMode::Vuln232 && !terminated && complete > limit {
            // the 2.3.2 copy loop only stops at a bottom-of-stack entry
            for _ in limit..complete {
                self.mem.write_stack_slot();
            }
            let overflow = (complete - limit) as usize * LSE_LEN;
            self.event(CorruptionKind::StackOverflowWrite, 0, overflow);
        }

        if self.profile.mode == ParserMode::Vuln240 && !terminated && fragment > 0 {
            let word = self.mem.read::<LSE_LEN>(self.bytes, pos);
            let lse: MplsLse = decode_lse(word);
            key.mpls_top.get_or_insert(lse);
            complete += 1;
            self.event(CorruptionKind::ShortLseOverflow, 0, LSE_LEN - fragment);
        }

        key.mpls_depth_seen = complete.min(limit);
        key.parse_status =
            if terminated { ParseStatus::MplsTerminated } else { ParseStatus::Malformed };
    }

    fn parse_ipv4(&mut self, key: &mut FlowKey) {
        let ip_start = ETHERNET_HEADER_LEN;
        let rest = &self.bytes[ip_start..];
        key.parse_status = ParseStatus::Malformed;

        let Some(hdr) = Ipv4Header::read_fixed(rest) else { return };
        let header_len = hdr.header_len();
        if hdr.version != 4 || hdr.ihl < 5 || rest.len() < header_len {
            return;
        }
        let total_length = usize::from(hdr.total_length);
        let l4_start = ip_start + header_len;
        let carries_ports = matches!(hdr.protocol, IPPROTO_TCP | IPPROTO_UDP);

        if !is_well_formed(hdr.version, hdr.ihl, hdr.total_length) {
            if self.profile.mode != ParserMode::Vuln250 {
                return;
            }
            // payload length = total_length - header_len in 16-bit arithmetic,
            // which wraps to a huge value and lets the L4 read go ahead
            let payload_len = hdr.total_length.wrapping_sub(header_len as u16);
            debug_assert!(usize::from(payload_len) > total_length);
            fill_ip(key, &hdr);
            if carries_ports {
                let ports = self.mem.read::<4>(self.bytes, l4_start);
                key.l4_src = Some(u16::from_be_bytes([ports[0], ports[1]]));
                key.l4_dst = Some(u16::from_be_bytes([ports[2], ports[3]]));
            }
            let offset = header_len - total_length;
            self.event(CorruptionKind::HeapOverread, offset, 2);
            return;
        }

        if total_length > rest.len() {
            return;
        }
        fill_ip(key, &hdr);
        if carries_ports {
            if header_len + 4 > total_length {
                return;
            }
            let b = &self.bytes[l4_start..l4_start + 4];
            key.l4_src = Some(u16::from_be_bytes([b[0], b[1]]));
            key.l4_dst = Some(u16::from_be_bytes([b[2], b[3]]));
        }
        key.parse_status = ParseStatus::Complete;
    }
}

fn fill_ip(key: &mut FlowKey, hdr: &Ipv4Header) {
    key.ip_src = Some(hdr.src);
    key.ip_dst = Some(hdr.dst);
    key.ip_proto = Some(hdr.protocol);
    key.ip_tos = Some(hdr.tos);
    key.ip_ttl = Some(hdr.ttl);
}

/// Runs the extraction stage of the pipeline on one frame.
///
/// Malformed input is reported through `key.parse_status` and `verdict`;
/// the only error is an empty frame.
pub fn extract(
    frame: &RawFrame,
    in_port: PortId,
    profile: &ParserProfile,
) -> Result<ExtractionResult, ExtractError> {
    extract_bytes(frame.bytes(), in_port, profile)
}

pub fn extract_bytes(
    bytes: &[u8],
    in_port: PortId,
    profile: &ParserProfile,
) -> Result<ExtractionResult, ExtractError> {
    if bytes.is_empty() {
        return Err(ExtractError::EmptyFrame);
    }
    let mut ex = Extraction {
        bytes,
        profile: *profile,
        mem: MemoryModel::new(profile),
        events: Vec::new(),
    };

    let key = match EthernetHeader::decode(bytes) {
        None => FlowKey::empty(in_port, ParseStatus::Malformed),
        Some(eth) => {
            let mut key = FlowKey::empty(in_port, ParseStatus::L2Only);
            key.eth_src = eth.src_mac;
            key.eth_dst = eth.dst_mac;
            key.ethertype = eth.ethertype;
            if is_mpls_ethertype(eth.ethertype) {
                ex.walk_label_stack(&mut key);
            } else if eth.ethertype == ETHERTYPE_IPV4 {
                ex.parse_ipv4(&mut key);
            }
            key
        }
    };

    let verdict = if profile.mode == ParserMode::Hardened && key.parse_status == ParseStatus::Malformed
    {
        Verdict::Drop
    } else {
        Verdict::Accept
    };
    Ok(ExtractionResult { key, events: ex.events, verdict, memory: ex.mem.accounting() })
}
