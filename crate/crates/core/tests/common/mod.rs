//! Independent oracles and generators shared by the integration tests.
//! The oracles read raw octets directly and do not call into the crate.
#![allow(dead_code)]

use proptest::prelude::*;
use shimguard::flowtable::{Action, Field, FieldMatch, Rule};
use shimguard::packet::{MplsLse, PortId, RawFrame};

pub const ETH_LEN: usize = 14;

fn ethertype(bytes: &[u8]) -> Option<u16> {
    (bytes.len() >= ETH_LEN).then(|| u16::from_be_bytes([bytes[12], bytes[13]]))
}

fn is_mpls(bytes: &[u8]) -> bool {
    matches!(ethertype(bytes), Some(0x8847 | 0x8848))
}

/// Octets of every complete 4-octet chunk after the Ethernet header, up to
/// and including the first one whose bit 0 of octet 2 is set.
fn walk(bytes: &[u8]) -> (usize, bool) {
    let mut n = 0;
    for chunk in bytes[ETH_LEN..].chunks_exact(4) {
        n += 1;
        if chunk[2] & 1 == 1 {
            return (n, true);
        }
    }
    (n, false)
}

/// Expected overflow size for the long-stack bug, if it triggers.
pub fn long_stack_overflow(bytes: &[u8], label_limit: usize) -> Option<usize> {
    if !is_mpls(bytes) {
        return None;
    }
    let (n, terminated) = walk(bytes);
    (!terminated && n > label_limit).then(|| 4 * (n - label_limit))
}

/// Expected overrun for the truncated-entry bug, if it triggers.
pub fn short_entry_overflow(bytes: &[u8]) -> Option<usize> {
    if !is_mpls(bytes) {
        return None;
    }
    let (_, terminated) = walk(bytes);
    let r = (bytes.len() - ETH_LEN) % 4;
    (!terminated && r != 0).then(|| 4 - r)
}

/// An IPv4 header is present (version 4, IHL at least 5, all of it
/// captured) and its total length is below the header length.
pub fn ip_underflow(bytes: &[u8]) -> bool {
    if ethertype(bytes) != Some(0x0800) || bytes.len() < ETH_LEN + 20 {
        return false;
    }
    let version = bytes[ETH_LEN] >> 4;
    let hlen = usize::from(bytes[ETH_LEN] & 0x0f) * 4;
    let total = usize::from(u16::from_be_bytes([bytes[ETH_LEN + 2], bytes[ETH_LEN + 3]]));
    version == 4 && hlen >= 20 && bytes.len() >= ETH_LEN + hlen && total < hlen
}

pub fn any_vulnerability(bytes: &[u8], label_limit: usize) -> bool {
    long_stack_overflow(bytes, label_limit).is_some()
        || short_entry_overflow(bytes).is_some()
        || ip_underflow(bytes)
}

pub fn complete_entries(bytes: &[u8]) -> usize {
    if !is_mpls(bytes) {
        return 0;
    }
    (bytes.len() - ETH_LEN) / 4
}

// ---- generators ----

fn eth(ethertype: u16, src_last: u8) -> Vec<u8> {
    let mut v = vec![0x02, 0, 0, 0, 0, 0x02, 0x02, 0, 0, 0, 0, src_last];
    v.extend_from_slice(&ethertype.to_be_bytes());
    v
}

/// Label stacks of 0 to 10 entries with a sparse bottom bit and a short
/// ragged tail.
pub fn mpls_frame() -> impl Strategy<Value = Vec<u8>> {
    (
        prop_oneof![Just(0x8847u16), Just(0x8848u16)],
        prop::collection::vec((any::<u32>(), prop::bool::weighted(0.15)), 0..10),
        prop::collection::vec(any::<u8>(), 0..7),
    )
        .prop_map(|(et, entries, tail)| {
            let mut f = eth(et, 1);
            for (word, s) in entries {
                let word = if s { word | 0x100 } else { word & !0x100 };
                f.extend_from_slice(&word.to_be_bytes());
            }
            f.extend_from_slice(&tail);
            f
        })
}

/// IPv4 frames biased toward the interesting length fields.
pub fn ipv4_frame() -> impl Strategy<Value = Vec<u8>> {
    (
        prop_oneof![4 => Just(4u8), 1 => 0u8..16],
        prop_oneof![4 => Just(5u8), 1 => 0u8..16],
        prop_oneof![Just(0u16), 1u16..20, 20u16..80, any::<u16>()],
        prop_oneof![Just(6u8), Just(17u8), Just(1u8), any::<u8>()],
        prop::collection::vec(any::<u8>(), 10..16),
        prop::collection::vec(any::<u8>(), 0..70),
    )
        .prop_map(|(version, ihl, total, proto, mut rest, tail)| {
            let mut f = eth(0x0800, 1);
            f.push((version << 4) | ihl);
            f.push(rest[0]);
            f.extend_from_slice(&total.to_be_bytes());
            rest[5] = proto;
            f.extend_from_slice(&rest[..4]); // id, flags/frag
            f.push(rest[4]); // ttl
            f.push(proto);
            f.extend_from_slice(&rest[6..]); // checksum and part of the addresses
            f.extend_from_slice(&tail);
            f
        })
}

pub fn any_frame() -> impl Strategy<Value = Vec<u8>> {
    prop_oneof![
        3 => mpls_frame(),
        3 => ipv4_frame(),
        1 => prop::collection::vec(any::<u8>(), 1..80),
        1 => (any::<u16>(), prop::collection::vec(any::<u8>(), 0..40)).prop_map(|(et, body)| {
            let mut f = eth(et, 1);
            f.extend_from_slice(&body);
            f
        }),
    ]
}

// ---- small-domain flows and rules for the cache oracle ----

const PORTS: [u16; 3] = [22, 80, 8080];

/// A frame drawn from a domain small enough that rules match often.
pub fn flow_frame() -> impl Strategy<Value = (PortId, Vec<u8>)> {
    let ip = (
        0u8..2,
        0u8..2,
        0u8..2,
        prop_oneof![Just(6u8), Just(17u8), Just(1u8)],
        0usize..3,
        0usize..3,
        prop::bool::weighted(0.2),
    )
        .prop_map(|(mac, src, dst, proto, sp, dp, underflow)| {
            let mut f = eth(0x0800, mac);
            let total: u16 = if underflow { 0 } else { 28 };
            f.extend_from_slice(&[0x45, 0]);
            f.extend_from_slice(&total.to_be_bytes());
            f.extend_from_slice(&[0, 0, 0, 0, 64, proto, 0, 0]);
            f.extend_from_slice(&[10, 0, 0, 1 + src, 10, 0, 0, 1 + dst]);
            f.extend_from_slice(&PORTS[sp].to_be_bytes());
            f.extend_from_slice(&PORTS[dp].to_be_bytes());
            f.extend_from_slice(&[0, 8, 0, 0]);
            f
        });
    let mpls = (0u8..2, prop::collection::vec((16u32..18, prop::bool::weighted(0.4)), 1..6))
        .prop_map(|(mac, entries)| {
            let mut f = eth(0x8847, mac);
            for (label, s) in entries {
                f.extend_from_slice(&MplsLse::new(label, 0, s, 64).encode());
            }
            f
        });
    let arp = (0u8..2).prop_map(|mac| {
        let mut f = eth(0x0806, mac);
        f.extend_from_slice(&[0; 28]);
        f
    });
    (1u32..3, prop_oneof![4 => ip, 2 => mpls, 1 => arp]).prop_map(|(p, f)| (PortId(p), f))
}

fn field_match() -> impl Strategy<Value = FieldMatch> {
    let pick = |field: Field, values: Vec<u64>| {
        prop::sample::select(values).prop_map(move |value| FieldMatch { field, value })
    };
    prop_oneof![
        pick(Field::InPort, vec![1, 2]),
        pick(Field::EthSrc, vec![0x0200_0000_0000, 0x0200_0000_0001]),
        pick(Field::EthType, vec![0x0800, 0x8847, 0x0806]),
        pick(Field::MplsLabel, vec![16, 17]),
        pick(Field::MplsS, vec![0, 1]),
        pick(Field::IpSrc, vec![0x0a00_0001, 0x0a00_0002]),
        pick(Field::IpDst, vec![0x0a00_0001, 0x0a00_0002]),
        pick(Field::IpProto, vec![1, 6, 17]),
        pick(Field::L4Src, vec![22, 80, 8080]),
        pick(Field::L4Dst, vec![22, 80, 8080]),
        pick(Field::ParseStatus, vec![0, 1, 2, 3]),
    ]
}

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        4 => (1u32..5).prop_map(|p| Action::Output(PortId(p))),
        2 => Just(Action::Drop),
        1 => Just(Action::ToController),
        1 => Just(Action::PushMpls(MplsLse::new(100, 0, false, 64))),
        1 => Just(Action::PopMpls),
    ]
}

pub fn rule() -> impl Strategy<Value = Rule> {
    (
        0i32..4,
        prop::collection::vec(field_match(), 0..4),
        prop::collection::vec(action(), 1..4),
    )
        .prop_map(|(priority, mut matches, actions)| {
            matches.sort_by_key(|m| m.field);
            matches.dedup_by_key(|m| m.field);
            Rule::new(priority, matches, actions).expect("fields deduplicated")
        })
}

pub fn rule_set() -> impl Strategy<Value = Vec<Rule>> {
    prop::collection::vec(rule(), 0..=8)
}

pub fn raw(bytes: Vec<u8>) -> RawFrame {
    RawFrame::new(bytes)
}
