mod common;

use std::collections::HashSet;
use std::net::Ipv4Addr;

use proptest::prelude::*;
use shimguard::attacks::{decode_payload, encode_payload, mutate, AttackError, MutationBudget};
use shimguard::extract::{extract_bytes, CorruptionKind, ParserMode, ParserProfile, Verdict};
use shimguard::flowtable::{ActionContext, Disposition, Field, SwitchConfig, SwitchState};
use shimguard::packet::pcap::{parse_pcap, write_pcap_to};
use shimguard::packet::{
    decode_lse, encode_frame, EthernetHeader, FlowKey, Ipv4Header, Layer, MacAddr, MplsLse,
    ParseStatus, PortId, RawFrame, Timestamp, UdpHeader, ETHERTYPE_IPV4, ETHERTYPE_MPLS_UNICAST,
};

use common::*;

const PORT: PortId = PortId(1);

fn run(bytes: &[u8], mode: ParserMode) -> shimguard::extract::ExtractionResult {
    extract_bytes(bytes, PORT, &ParserProfile::new(mode)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn hardened_is_silent_and_in_bounds(bytes in any_frame(), limit in 1u32..6) {
        let profile = ParserProfile::hardened().with_label_limit(limit).unwrap();
        let r = extract_bytes(&bytes, PORT, &profile).unwrap();
        prop_assert!(r.events.is_empty());
        prop_assert!(r.memory.is_zero());
        prop_assert_eq!(r.verdict == Verdict::Drop, r.key.parse_status == ParseStatus::Malformed);
    }

    #[test]
    fn long_stack_event_iff_oracle(bytes in any_frame(), limit in 1u32..6) {
        let profile = ParserProfile::new(ParserMode::Vuln232).with_label_limit(limit).unwrap();
        let r = extract_bytes(&bytes, PORT, &profile).unwrap();
        let got: Vec<_> = r.events.iter()
            .filter(|e| e.kind == CorruptionKind::StackOverflowWrite)
            .map(|e| e.byte_count)
            .collect();
        let want: Vec<_> = long_stack_overflow(&bytes, limit as usize).into_iter().collect();
        prop_assert_eq!(got, want);
        prop_assert_eq!(r.verdict, Verdict::Accept);
    }

    #[test]
    fn short_entry_event_iff_oracle(bytes in any_frame()) {
        let r = run(&bytes, ParserMode::Vuln240);
        let got: Vec<_> = r.events.iter()
            .filter(|e| e.kind == CorruptionKind::ShortLseOverflow)
            .map(|e| e.byte_count)
            .collect();
        let want: Vec<_> = short_entry_overflow(&bytes).into_iter().collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn ip_underflow_event_iff_oracle(bytes in any_frame()) {
        let r = run(&bytes, ParserMode::Vuln250);
        let got = r.events.iter().any(|e| e.kind == CorruptionKind::HeapOverread);
        prop_assert_eq!(got, ip_underflow(&bytes));
        prop_assert!(r.events.iter().all(|e| e.byte_count == 2));
    }

    #[test]
    fn profiles_agree_without_a_trigger(bytes in any_frame()) {
        prop_assume!(!any_vulnerability(&bytes, 3));
        let keys: Vec<FlowKey> = ParserMode::ALL.iter().map(|&m| run(&bytes, m).key).collect();
        for k in &keys[1..] {
            prop_assert_eq!(k, &keys[0]);
        }
        for m in ParserMode::ALL {
            prop_assert!(run(&bytes, m).events.is_empty());
        }
    }

    #[test]
    fn hardened_depth_bounded_by_complete_entries(bytes in any_frame()) {
        let r = run(&bytes, ParserMode::Hardened);
        prop_assert!(r.key.mpls_depth_seen as usize <= complete_entries(&bytes));
    }

    #[test]
    fn pcap_round_trip(frames in prop::collection::vec(
        (prop::collection::vec(any::<u8>(), 0..300), 0u32..64, any::<u32>(), 0u32..1_000_000),
        0..12,
    )) {
        let frames: Vec<RawFrame> = frames
            .into_iter()
            .map(|(bytes, extra, secs, micros)| {
                let orig = bytes.len() as u32 + extra;
                RawFrame::captured(bytes, orig, Timestamp { secs, micros }).unwrap()
            })
            .collect();
        let mut buf = Vec::new();
        write_pcap_to(&mut buf, &frames).unwrap();
        prop_assert_eq!(parse_pcap(&buf).unwrap(), frames);
    }

    #[test]
    fn encode_frame_length(
        labels in prop::collection::vec(any::<u32>(), 0..8),
        raw in prop::collection::vec(any::<u8>(), 0..9),
        options in 0usize..11,
        with_ip in any::<bool>(),
        payload in prop::collection::vec(any::<u8>(), 0..64),
    ) {
        let (eth, layers) = if with_ip {
            let ip = Ipv4Header { options: vec![0; options * 4], ..Default::default() };
            let udp = UdpHeader { src_port: 1, dst_port: 2, length: 8, checksum: 0 };
            (EthernetHeader::new(ETHERTYPE_IPV4), vec![Layer::Ipv4(ip), Layer::Udp(udp), Layer::Raw(raw)])
        } else {
            let mut layers: Vec<Layer> = labels.iter().map(|&w| Layer::Mpls(MplsLse::from_word(w))).collect();
            layers.push(Layer::Raw(raw));
            (EthernetHeader::new(ETHERTYPE_MPLS_UNICAST), layers)
        };
        let expected = 14 + layers.iter().map(|l| match l {
            Layer::Mpls(_) => 4,
            Layer::Ipv4(h) => 20 + h.options.len(),
            Layer::Udp(_) => 8,
            Layer::Raw(b) => b.len(),
        }).sum::<usize>() + payload.len();
        prop_assert_eq!(encode_frame(&eth, &layers, &payload).unwrap().capture_len(), expected);
    }

    #[test]
    fn payload_encoding_round_trip_and_rejection(data in prop::collection::vec(any::<u8>(), 0..64)) {
        let data = &data[..data.len() / 4 * 4];
        let first_bad = data.chunks(4).position(|c| c[2] & 0x01 != 0);
        match (encode_payload(data), first_bad) {
            (Ok(stack), None) => {
                prop_assert_eq!(decode_payload(&stack), data.to_vec());
                prop_assert!(stack.iter().all(|l| !l.bottom_of_stack));
            }
            (Err(AttackError::PayloadViolatesConstraint { chunk_index }), Some(i)) => {
                prop_assert_eq!(chunk_index, i);
            }
            (other, expected) => prop_assert!(false, "{:?} vs {:?}", other, expected),
        }
    }

    #[test]
    fn misaligned_payload_rejected(data in prop::collection::vec(any::<u8>(), 0..64)) {
        prop_assume!(data.len() % 4 != 0);
        let rejected = matches!(encode_payload(&data), Err(AttackError::PayloadMisaligned { .. }));
        prop_assert!(rejected);
    }

    #[test]
    fn push_then_pop_restores_key(bytes in any_frame(), label in 0u32..(1 << 20), depth in 1usize..4) {
        let key = run(&bytes, ParserMode::Hardened).key;
        let mut ctx = ActionContext::new(key.clone());
        for _ in 0..depth {
            ctx.push_mpls(MplsLse::new(label, 0, false, 64));
        }
        for _ in 0..depth {
            prop_assert!(ctx.pop_mpls());
        }
        prop_assert_eq!(ctx.key, key);
    }

    #[test]
    fn mutation_stream_is_pure(
        corpus in prop::collection::vec(prop::collection::vec(any::<u8>(), 1..80), 1..5),
        seed in any::<u64>(),
        iters in 0u64..200,
    ) {
        let corpus: Vec<RawFrame> = corpus.into_iter().map(RawFrame::new).collect();
        let budget = MutationBudget::new(iters, seed);
        let a: Vec<_> = mutate(&corpus, &budget).unwrap().collect();
        let b: Vec<_> = mutate(&corpus, &budget).unwrap().collect();
        prop_assert_eq!(a.len() as u64, iters);
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100_000))]

    #[test]
    fn lse_round_trip(b in any::<[u8; 4]>()) {
        prop_assert_eq!(decode_lse(b).encode(), b);
    }
}

#[test]
fn lse_corner_patterns() {
    for pattern in 0u8..16 {
        let b: [u8; 4] = std::array::from_fn(|i| if pattern >> i & 1 == 1 { 0xff } else { 0x00 });
        assert_eq!(decode_lse(b).encode(), b);
        let b: [u8; 4] = std::array::from_fn(|i| if pattern >> i & 1 == 1 { 0x80 } else { 0x01 });
        assert_eq!(decode_lse(b).encode(), b);
    }
}

fn run_switch(
    rules: &[shimguard::flowtable::Rule],
    frames: &[(PortId, Vec<u8>)],
    profile: &ParserProfile,
    megaflow: bool,
) -> (Vec<Disposition>, SwitchState) {
    let config = SwitchConfig { megaflow_enabled: megaflow, ..SwitchConfig::default() };
    let mut sw = SwitchState::new(rules.to_vec(), config);
    let out = frames
        .iter()
        .map(|(port, bytes)| sw.process(&RawFrame::new(bytes.clone()), *port, profile).unwrap())
        .collect();
    (out, sw)
}

fn switch_profile() -> impl Strategy<Value = ParserProfile> {
    prop::sample::select(ParserMode::ALL.to_vec()).prop_map(ParserProfile::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn caches_do_not_change_dispositions(
        rules in rule_set(),
        frames in prop::collection::vec(flow_frame(), 1..120),
        profile in switch_profile(),
    ) {
        let (cached, _) = run_switch(&rules, &frames, &profile, true);
        let (uncached, sw) = run_switch(&rules, &frames, &profile, false);
        prop_assert_eq!(cached, uncached);
        prop_assert!(sw.megaflows().is_empty());
        prop_assert_eq!(sw.microflow_len(), 0);
    }

    #[test]
    fn megaflow_entries_match_full_classification(
        rules in rule_set(),
        frames in prop::collection::vec(flow_frame(), 1..80),
        probes in prop::collection::vec(flow_frame(), 1..40),
        profile in switch_profile(),
    ) {
        let (_, sw) = run_switch(&rules, &frames, &profile, true);
        let probe_keys: Vec<FlowKey> = probes
            .iter()
            .map(|(p, b)| extract_bytes(b, *p, &profile).unwrap().key)
            .collect();
        for entry in sw.megaflows() {
            // any key agreeing on the masked fields must classify the same way
            for probe in &probe_keys {
                let mut key = probe.clone();
                entry.masked_key.apply_to(&mut key);
                for f in entry.mask().iter() {
                    prop_assert_eq!(f.get(&key), entry.masked_key.value(f));
                }
                prop_assert_eq!(&sw.decide(&key).0, &entry.actions);
            }
        }
    }

    #[test]
    fn counters_conserve(
        rules in rule_set(),
        frames in prop::collection::vec(flow_frame(), 0..100),
        profile in switch_profile(),
        megaflow in any::<bool>(),
    ) {
        let (out, sw) = run_switch(&rules, &frames, &profile, megaflow);
        let s = sw.stats();
        prop_assert_eq!(s.packets, frames.len() as u64);
        prop_assert_eq!(s.forwards + s.drops + s.to_controller, s.packets);
        prop_assert_eq!(s.fast_path_hits + s.slow_path_upcalls + s.parse_drops, s.packets);
        let forwarded = out.iter().filter(|d| matches!(d, Disposition::Forwarded(_))).count();
        prop_assert_eq!(s.forwards, forwarded as u64);
    }

    #[test]
    fn repeated_flows_upcall_once_per_megaflow(
        rules in rule_set(),
        flows in prop::collection::vec(flow_frame(), 1..40),
        repeats in 2usize..5,
    ) {
        let profile = ParserProfile::hardened();
        let mut sequence = Vec::new();
        for _ in 0..repeats {
            sequence.extend(flows.iter().cloned());
        }
        let (_, sw) = run_switch(&rules, &sequence, &profile, true);
        let distinct: HashSet<_> = flows.iter().collect();
        let upcalls = sw.stats().slow_path_upcalls;
        prop_assert_eq!(upcalls, sw.megaflows().len() as u64);
        prop_assert!(upcalls <= distinct.len() as u64);
        let (_, first_pass) = run_switch(&rules, &flows, &profile, true);
        prop_assert_eq!(upcalls, first_pass.stats().slow_path_upcalls);
    }
}

#[test]
fn megaflow_mask_check_uses_field_accessors() {
    let mut key = FlowKey::empty(PORT, ParseStatus::Complete);
    key.eth_src = MacAddr([2, 0, 0, 0, 0, 1]);
    key.ip_src = Some(Ipv4Addr::new(10, 0, 0, 1));
    assert_eq!(Field::EthSrc.get(&key), Some(0x0200_0000_0001));
    assert_eq!(Field::IpSrc.get(&key), Some(0x0a00_0001));
}

#[test]
fn frame_generator_reaches_every_trigger() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;

    let mut runner = TestRunner::deterministic();
    let strategy = any_frame();
    let (mut long, mut short, mut under, mut clean) = (0, 0, 0, 0);
    for _ in 0..2000 {
        let bytes = strategy.new_tree(&mut runner).unwrap().current();
        long += long_stack_overflow(&bytes, 3).is_some() as u32;
        short += short_entry_overflow(&bytes).is_some() as u32;
        under += ip_underflow(&bytes) as u32;
        clean += !any_vulnerability(&bytes, 3) as u32;
    }
    for (name, n) in [("long", long), ("short", short), ("underflow", under), ("clean", clean)] {
        assert!(n >= 50, "{name}: only {n} of 2000 frames");
    }
}

mod worm {
    use proptest::prelude::*;
    use shimguard::wormsim::{simulate, Node, StageTimings, Topology, WormEvent};

    fn timings() -> impl Strategy<Value = StageTimings> {
        prop::array::uniform6(0.0f64..100.0).prop_map(|v| StageTimings {
            exploit_send: v[0],
            download: v[1],
            restart_sleep: v[2],
            hop_overhead: v[3],
            controller_restore: v[4],
            dos_outage: v[5],
        })
    }

    proptest! {
        #[test]
        fn increasing_a_stage_never_speeds_up(t in timings(), n in 1usize..50, which in 0usize..6, extra in 0.0f64..50.0) {
            let topo = Topology::with_nodes(n).unwrap();
            let base = simulate(&topo, &t).unwrap().total_compromise_time;
            let mut slower = t;
            let key = StageTimings::KEYS[which];
            let current = match which {
                0 => t.exploit_send,
                1 => t.download,
                2 => t.restart_sleep,
                3 => t.hop_overhead,
                4 => t.controller_restore,
                _ => t.dos_outage,
            };
            slower.set(key, current + extra).unwrap();
            prop_assert!(simulate(&topo, &slower).unwrap().total_compromise_time >= base);
        }

        #[test]
        fn timeline_shape(t in timings(), n in 1usize..40, host_seed in any::<usize>()) {
            let topo = Topology::new(n, host_seed % n).unwrap();
            let a = simulate(&topo, &t).unwrap();
            prop_assert_eq!(&a, &simulate(&topo, &t).unwrap());
            prop_assert!(a.events.windows(2).all(|w| w[0].time <= w[1].time));
            for node in topo.nodes() {
                let shells = a.events.iter()
                    .filter(|e| e.node == node && e.event == WormEvent::ShellObtained)
                    .count();
                prop_assert_eq!(shells, 1);
            }
            let latest = a.events.iter()
                .filter(|e| e.event == WormEvent::ShellObtained)
                .map(|e| e.time)
                .fold(0.0, f64::max);
            prop_assert_eq!(a.total_compromise_time, latest);
        }

        #[test]
        fn fanout_is_parallel(t in timings(), n in 2usize..200) {
            let two = simulate(&Topology::with_nodes(2).unwrap(), &t).unwrap();
            let many = simulate(&Topology::with_nodes(n).unwrap(), &t).unwrap();
            prop_assert_eq!(two.total_compromise_time, many.total_compromise_time);
            prop_assert_eq!(many.shell_time(Node::Compute(n - 1)), two.shell_time(Node::Compute(1)));
        }
    }
}

mod fuzzing {
    use super::common::any_frame;
    use proptest::prelude::*;
    use shimguard::attacks::{diff_fuzz, minimize, MutationBudget};
    use shimguard::extract::{extract_bytes, ParserMode, ParserProfile, VulnClass};
    use shimguard::packet::{PortId, RawFrame};

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn harness_never_blames_hardened(
            corpus in prop::collection::vec(any_frame(), 1..5),
            seed in any::<u64>(),
        ) {
            let corpus: Vec<RawFrame> = corpus.into_iter().map(RawFrame::new).collect();
            let profiles: Vec<_> = ParserMode::ALL.into_iter().map(ParserProfile::new).collect();
            let report = diff_fuzz(&corpus, &MutationBudget::new(300, seed), &profiles).unwrap();
            prop_assert_eq!(report.hardened_events, 0);
            prop_assert_eq!(report.equivalence_violations, 0);
            for (class, ex) in &report.exemplars {
                let profile = ParserProfile::new(ex.profile);
                let r = extract_bytes(&ex.frame, PortId(1), &profile).unwrap();
                prop_assert_eq!(r.class(), *class);
                prop_assert!(ex.frame.len() <= ex.raw_len);
            }
        }
    }

    proptest! {
        #[test]
        fn minimization_preserves_class(bytes in any_frame()) {
            for mode in [ParserMode::Vuln232, ParserMode::Vuln240, ParserMode::Vuln250] {
                let profile = ParserProfile::new(mode);
                let class = extract_bytes(&bytes, PortId(1), &profile).unwrap().class();
                if class == VulnClass::Benign {
                    continue;
                }
                let min = minimize(&bytes, &profile, class);
                prop_assert!(min.len() <= bytes.len());
                prop_assert_eq!(extract_bytes(&min, PortId(1), &profile).unwrap().class(), class);
            }
        }
    }
}
