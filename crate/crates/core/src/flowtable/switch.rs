use std::collections::HashMap;
use std::fmt::Write as _;
use std::num::NonZeroUsize;

use lru::LruCache;

use super::field::{FieldSet, MaskedKey};
use super::{format_rule, Action, Rule};
use crate::extract::{extract, extract_bytes, ExtractError, ParserProfile, Verdict};
use crate::packet::{FlowKey, MplsLse, PortId, RawFrame, ETHERTYPE_MPLS_UNICAST};
use crate::packet::mpls::is_mpls_ethertype;

pub const DEFAULT_MICROFLOW_CAPACITY: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Disposition {
    Forwarded(Vec<PortId>),
    Dropped,
    SentToController,
}

impl std::fmt::Display for Disposition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Disposition::Forwarded(ports) => {
                let ports: Vec<String> = ports.iter().map(|p| p.to_string()).collect();
                write!(f, "forwarded:{}", ports.join(","))
            }
            Disposition::Dropped => f.write_str("dropped"),
            Disposition::SentToController => f.write_str("controller"),
        }
    }
}

/// What the slow path does when no rule matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissAction {
    #[default]
    Drop,
    ToController,
}

impl MissAction {
    fn action(self) -> Action {
        match self {
            MissAction::Drop => Action::Drop,
            MissAction::ToController => Action::ToController,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchConfig {
    pub megaflow_enabled: bool,
    pub miss_action: MissAction,
    pub microflow_capacity: usize,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            megaflow_enabled: true,
            miss_action: MissAction::Drop,
            microflow_capacity: DEFAULT_MICROFLOW_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SwitchStats {
    pub packets: u64,
    pub slow_path_upcalls: u64,
    pub fast_path_hits: u64,
    pub microflow_hits: u64,
    pub megaflow_hits: u64,
    pub forwards: u64,
    pub drops: u64,
    pub to_controller: u64,
    /// Frames the extraction stage refused; also counted in `drops`.
    pub parse_drops: u64,
    pub no_rule_match: u64,
    pub pop_mpls_noop: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MegaflowEntry {
    pub masked_key: MaskedKey,
    pub actions: Vec<Action>,
    pub hits: u64,
}

impl MegaflowEntry {
    pub fn mask(&self) -> FieldSet {
        self.masked_key.mask()
    }
}

#[derive(Debug)]
struct MaskTable {
    mask: FieldSet,
    entries: HashMap<MaskedKey, usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum SwitchError {
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// Rule table plus caches of one switch. `process` needs `&mut self`; a
/// switch has a single writer.
#[derive(Debug)]
pub struct SwitchState {
    /// Selection order: descending priority, file order within a priority.
    rules: Vec<Rule>,
    config: SwitchConfig,
    microflow: LruCache<FlowKey, usize>,
    masks: Vec<MaskTable>,
    entries: Vec<MegaflowEntry>,
    stats: SwitchStats,
}

impl SwitchState {
    pub fn new(mut rules: Vec<Rule>, config: SwitchConfig) -> Self {
        // stable: ties keep file order
        rules.sort_by_key(|r| std::cmp::Reverse(r.priority));
        let cap = NonZeroUsize::new(config.microflow_capacity.max(1)).unwrap();
        SwitchState {
            rules,
            config,
            microflow: LruCache::new(cap),
            masks: Vec::new(),
            entries: Vec::new(),
            stats: SwitchStats::default(),
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn stats(&self) -> &SwitchStats {
        &self.stats
    }

    pub fn config(&self) -> &SwitchConfig {
        &self.config
    }

    pub fn megaflow_enabled(&self) -> bool {
        self.config.megaflow_enabled
    }

    /// Turning the caches off flushes both of them.
    pub fn set_megaflow_enabled(&mut self, enabled: bool) {
        self.config.megaflow_enabled = enabled;
        if !enabled {
            self.flush_caches();
        }
    }

    pub fn flush_caches(&mut self) {
        self.microflow.clear();
        self.masks.clear();
        self.entries.clear();
    }

    pub fn megaflows(&self) -> &[MegaflowEntry] {
        &self.entries
    }

    pub fn microflow_len(&self) -> usize {
        self.microflow.len()
    }

    /// Slow-path rule selection. Returns the winning rule (if any) and every
    /// field consulted by rules at or above the winner's priority.
    pub fn classify(&self, key: &FlowKey) -> (Option<&Rule>, FieldSet) {
        let mut consulted = FieldSet::EMPTY;
        let mut winner: Option<&Rule> = None;
        for rule in &self.rules {
            if let Some(w) = winner {
                if rule.priority < w.priority {
                    break;
                }
                consulted = consulted.union(rule.fields());
                continue;
            }
            consulted = consulted.union(rule.fields());
            if rule.is_match(key) {
                winner = Some(rule);
            }
        }
        (winner, consulted)
    }

    /// The action list the slow path settles on for `key`.
    pub fn decide(&self, key: &FlowKey) -> (Vec<Action>, FieldSet) {
        let (winner, mask) = self.classify(key);
        let actions = match winner {
            Some(rule) => rule.actions.clone(),
            None => vec![self.config.miss_action.action()],
        };
        (actions, mask)
    }

    /// Extract, fast-path lookup, and on a miss an upcall to the slow path.
    pub fn process(
        &mut self,
        frame: &RawFrame,
        in_port: PortId,
        profile: &ParserProfile,
    ) -> Result<Disposition, SwitchError> {
        let ex = extract(frame, in_port, profile)?;
        self.stats.packets += 1;
        if ex.verdict == Verdict::Drop {
            self.stats.parse_drops += 1;
            self.stats.drops += 1;
            return Ok(Disposition::Dropped);
        }
        let key = ex.key;

        if self.config.megaflow_enabled {
            if let Some(id) = self.lookup_fast(&key) {
                self.stats.fast_path_hits += 1;
                let entry = &mut self.entries[id];
                entry.hits += 1;
                return Ok(execute(&entry.actions, &key, &mut self.stats));
            }
        }

        // The upcall hands the slow path its own copy of the packet, and the
        // slow path derives the key from that copy.
        self.stats.slow_path_upcalls += 1;
        let upcall = frame.bytes().to_vec();
        let slow_key = extract_bytes(&upcall, in_port, profile)?.key;
        let (winner, mask) = self.classify(&slow_key);
        let actions = match winner {
            Some(rule) => rule.actions.clone(),
            None => {
                self.stats.no_rule_match += 1;
                vec![self.config.miss_action.action()]
            }
        };
        let disposition = execute(&actions, &slow_key, &mut self.stats);
        if self.config.megaflow_enabled {
            self.install(slow_key, mask, actions);
        }
        Ok(disposition)
    }

    fn lookup_fast(&mut self, key: &FlowKey) -> Option<usize> {
        if let Some(&id) = self.microflow.get(key) {
            self.stats.microflow_hits += 1;
            return Some(id);
        }
        let id = self.masks.iter().find_map(|table| {
            table.entries.get(&MaskedKey::new(key, table.mask)).copied()
        })?;
        self.stats.megaflow_hits += 1;
        self.microflow.put(key.clone(), id);
        Some(id)
    }

    fn install(&mut self, key: FlowKey, mask: FieldSet, actions: Vec<Action>) {
        let masked_key = MaskedKey::new(&key, mask);
        let id = self.entries.len();
        self.entries.push(MegaflowEntry { masked_key, actions, hits: 0 });
        let table = match self.masks.iter_mut().position(|t| t.mask == mask) {
            Some(i) => &mut self.masks[i],
            None => {
                self.masks.push(MaskTable { mask, entries: HashMap::new() });
                self.masks.last_mut().unwrap()
            }
        };
        table.entries.insert(masked_key, id);
        self.microflow.put(key, id);
    }

    /// Deterministic text report of rules, caches and counters.
    pub fn dump_state(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "switch state");
        let caches = if self.config.megaflow_enabled { "enabled" } else { "disabled" };
        let _ = writeln!(out, "caches: {caches}");
        let _ = writeln!(out, "rules: {}", self.rules.len());
        for rule in &self.rules {
            let _ = writeln!(out, "  {}", format_rule(rule));
        }
        let _ = writeln!(out, "megaflows: {}", self.entries.len());
        for entry in &self.entries {
            let actions: Vec<String> = entry.actions.iter().map(Action::to_string).collect();
            let _ = writeln!(
                out,
                "  megaflow mask={} key={} actions={} hits={}",
                entry.mask(),
                entry.masked_key,
                actions.join(","),
                entry.hits
            );
        }
        let _ = writeln!(out, "microflows: {}", self.microflow.len());
        let s = &self.stats;
        let _ = writeln!(
            out,
            "stats: packets={} slow_path_upcalls={} fast_path_hits={} forwards={} drops={} \
             to_controller={} parse_drops={} no_rule_match={} pop_mpls_noop={}",
            s.packets,
            s.slow_path_upcalls,
            s.fast_path_hits,
            s.forwards,
            s.drops,
            s.to_controller,
            s.parse_drops,
            s.no_rule_match,
            s.pop_mpls_noop
        );
        out
    }
}

/// Applies header-modifying actions to a working copy of a key.
///
/// Pushed entries are remembered so that a later pop restores the exact
/// previous key.
#[derive(Debug, Clone)]
pub struct ActionContext {
    pub key: FlowKey,
    saved: Vec<(u16, Option<MplsLse>, u32)>,
    pub pop_noops: u64,
}

impl ActionContext {
    pub fn new(key: FlowKey) -> Self {
        ActionContext { key, saved: Vec::new(), pop_noops: 0 }
    }

    pub fn push_mpls(&mut self, lse: MplsLse) {
        let key = &mut self.key;
        self.saved.push((key.ethertype, key.mpls_top, key.mpls_depth_seen));
        let bottom = key.mpls_top.is_none();
        key.mpls_top = Some(MplsLse { bottom_of_stack: bottom, ..lse });
        if !is_mpls_ethertype(key.ethertype) {
            key.ethertype = ETHERTYPE_MPLS_UNICAST;
        }
        key.mpls_depth_seen += 1;
    }

    /// Returns false (and counts a no-op) when there is no label to pop.
    pub fn pop_mpls(&mut self) -> bool {
        if let Some((ethertype, top, depth)) = self.saved.pop() {
            self.key.ethertype = ethertype;
            self.key.mpls_top = top;
            self.key.mpls_depth_seen = depth;
            return true;
        }
        if self.key.mpls_top.take().is_some() {
            self.key.mpls_depth_seen = self.key.mpls_depth_seen.saturating_sub(1);
            return true;
        }
        self.pop_noops += 1;
        false
    }
}

fn execute(actions: &[Action], key: &FlowKey, stats: &mut SwitchStats) -> Disposition {
    let (disposition, ctx) = apply_actions(actions, key);
    if let Some(ctx) = ctx {
        stats.pop_mpls_noop += ctx.pop_noops;
    }
    match disposition {
        Disposition::Forwarded(_) => stats.forwards += 1,
        Disposition::Dropped => stats.drops += 1,
        Disposition::SentToController => stats.to_controller += 1,
    }
    disposition
}

/// Runs an action list. `drop` ends processing; otherwise any output wins
/// over `controller`, and a list with neither drops. The edited key is
/// returned when the list modified headers.
pub fn apply_actions(actions: &[Action], key: &FlowKey) -> (Disposition, Option<ActionContext>) {
    let edits = actions.iter().any(|a| matches!(a, Action::PushMpls(_) | Action::PopMpls));
    let mut ctx = edits.then(|| ActionContext::new(key.clone()));
    let mut ports = Vec::new();
    let mut controller = false;
    for action in actions {
        match *action {
            Action::Output(p) => ports.push(p),
            Action::Drop => return (Disposition::Dropped, ctx),
            Action::ToController => controller = true,
            Action::PushMpls(lse) => ctx.as_mut().unwrap().push_mpls(lse),
            Action::PopMpls => {
                ctx.as_mut().unwrap().pop_mpls();
            }
        }
    }
    let disposition = if !ports.is_empty() {
        Disposition::Forwarded(ports)
    } else if controller {
        Disposition::SentToController
    } else {
        Disposition::Dropped
    };
    (disposition, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::ParserMode;
    use crate::flowtable::load_rules;
    use crate::packet::{
        encode_frame, EthernetHeader, Ipv4Header, Layer, ParseStatus, UdpHeader, ETHERTYPE_IPV4,
    };
    use std::net::Ipv4Addr;

    fn udp_frame(sport: u16, dport: u16, total_length: u16) -> RawFrame {
        let ip = Ipv4Header {
            total_length,
            protocol: 17,
            src: Ipv4Addr::new(10, 0, 0, 1),
            dst: Ipv4Addr::new(10, 0, 0, 2),
            ..Default::default()
        };
        let udp = UdpHeader { src_port: sport, dst_port: dport, length: 8, checksum: 0 };
        encode_frame(
            &EthernetHeader::new(ETHERTYPE_IPV4),
            &[Layer::Ipv4(ip), Layer::Udp(udp)],
            &[],
        )
        .unwrap()
    }

    fn switch(text: &str) -> SwitchState {
        SwitchState::new(load_rules(text).unwrap(), SwitchConfig::default())
    }

    #[test]
    fn repeated_flow_hits_fast_path() {
        let mut sw = switch("priority=1, ip_proto=17, actions=output:1");
        let frame = udp_frame(53, 1024, 28);
        let hardened = ParserProfile::hardened();
        for _ in 0..1000 {
            let d = sw.process(&frame, PortId(0), &hardened).unwrap();
            assert_eq!(d, Disposition::Forwarded(vec![PortId(1)]));
        }
        assert_eq!(sw.stats().slow_path_upcalls, 1);
        assert_eq!(sw.stats().fast_path_hits, 999);
        assert_eq!(sw.stats().forwards, 1000);
    }

    #[test]
    fn megaflow_generalizes_across_microflows() {
        let mut sw = switch("priority=5, l4_dst=22, actions=drop\npriority=1, actions=output:1");
        let p = ParserProfile::hardened();
        for sport in 1000..1100 {
            sw.process(&udp_frame(sport, 80, 28), PortId(0), &p).unwrap();
        }
        // one upcall; the mask only covers l4_dst
        assert_eq!(sw.stats().slow_path_upcalls, 1);
        assert_eq!(sw.megaflows().len(), 1);
        assert_eq!(sw.megaflows()[0].mask().to_string(), "[l4_dst]");
        assert_eq!(sw.stats().megaflow_hits, 99);
        assert_eq!(sw.microflow_len(), 100);
    }

    #[test]
    fn disabled_caches_send_everything_to_slow_path() {
        let mut sw = switch("priority=1, actions=output:1");
        sw.set_megaflow_enabled(false);
        let p = ParserProfile::hardened();
        for i in 0..1000u16 {
            sw.process(&udp_frame(i, 7, 28), PortId(0), &p).unwrap();
        }
        assert_eq!(sw.stats().slow_path_upcalls, 1000);
        assert_eq!(sw.stats().fast_path_hits, 0);
        assert!(sw.megaflows().is_empty());
        assert!(sw.dump_state().contains("caches: disabled"));
    }

    #[test]
    fn disabling_flushes_caches() {
        let mut sw = switch("priority=1, actions=output:1");
        sw.process(&udp_frame(1, 2, 28), PortId(0), &ParserProfile::hardened()).unwrap();
        assert_eq!(sw.megaflows().len(), 1);
        sw.set_megaflow_enabled(false);
        assert!(sw.megaflows().is_empty());
        assert_eq!(sw.microflow_len(), 0);
    }

    #[test]
    fn acl_bypass_through_underflow() {
        let rules = "priority=10, parse_status=complete, l4_dst=8080, actions=drop\n\
                     priority=1, actions=output:1";
        let frame = udp_frame(8080, 8080, 0);

        let mut sw = switch(rules);
        let d = sw.process(&frame, PortId(0), &ParserProfile::hardened()).unwrap();
        assert_eq!(d, Disposition::Dropped);
        assert_eq!(sw.stats().parse_drops, 1);

        let mut sw = switch(rules);
        let d = sw.process(&frame, PortId(0), &ParserProfile::new(ParserMode::Vuln250)).unwrap();
        assert_eq!(d, Disposition::Forwarded(vec![PortId(1)]));

        // the same port over a valid datagram is blocked by the ACL
        let d = sw
            .process(&udp_frame(1, 8080, 28), PortId(0), &ParserProfile::new(ParserMode::Vuln250))
            .unwrap();
        assert_eq!(d, Disposition::Dropped);
    }

    #[test]
    fn port_only_acl_still_drops_vulnerable_parse() {
        let rules = "priority=10, l4_dst=8080, actions=drop\npriority=1, actions=output:1";
        let mut sw = switch(rules);
        let d = sw
            .process(&udp_frame(1, 8080, 0), PortId(0), &ParserProfile::new(ParserMode::Vuln250))
            .unwrap();
        assert_eq!(d, Disposition::Dropped);
    }

    #[test]
    fn miss_action() {
        let mut sw = switch("priority=1, l4_dst=1, actions=output:1");
        let d = sw.process(&udp_frame(1, 2, 28), PortId(0), &ParserProfile::hardened()).unwrap();
        assert_eq!(d, Disposition::Dropped);
        assert_eq!(sw.stats().no_rule_match, 1);

        let config = SwitchConfig { miss_action: MissAction::ToController, ..Default::default() };
        let mut sw = SwitchState::new(Vec::new(), config);
        let d = sw.process(&udp_frame(1, 2, 28), PortId(0), &ParserProfile::hardened()).unwrap();
        assert_eq!(d, Disposition::SentToController);
    }

    #[test]
    fn priority_ties_break_by_file_order() {
        let mut sw = switch("priority=5, actions=output:1\npriority=5, actions=output:2");
        let d = sw.process(&udp_frame(1, 2, 28), PortId(0), &ParserProfile::hardened()).unwrap();
        assert_eq!(d, Disposition::Forwarded(vec![PortId(1)]));
    }

    #[test]
    fn consulted_fields_include_tied_rules() {
        let sw = switch(
            "priority=9, l4_src=1, actions=drop\n\
             priority=5, ip_proto=17, actions=output:1\n\
             priority=5, l4_dst=3, actions=output:2\n\
             priority=1, in_port=4, actions=output:3",
        );
        let mut key = FlowKey::empty(PortId(0), ParseStatus::Complete);
        key.ip_proto = Some(17);
        let (winner, mask) = sw.classify(&key);
        assert_eq!(winner.unwrap().actions, vec![Action::Output(PortId(1))]);
        assert_eq!(mask.to_string(), "[ip_proto,l4_src,l4_dst]");
    }

    #[test]
    fn action_semantics() {
        let key = FlowKey::empty(PortId(0), ParseStatus::L2Only);
        let out = |a: &[Action]| apply_actions(a, &key).0;
        assert_eq!(out(&[Action::Output(PortId(1)), Action::Output(PortId(2))]),
                   Disposition::Forwarded(vec![PortId(1), PortId(2)]));
        assert_eq!(out(&[Action::Output(PortId(1)), Action::Drop]), Disposition::Dropped);
        assert_eq!(out(&[Action::ToController]), Disposition::SentToController);
        assert_eq!(out(&[]), Disposition::Dropped);
    }

    #[test]
    fn push_pop_restores_key() {
        let mut key = FlowKey::empty(PortId(2), ParseStatus::Complete);
        key.ethertype = ETHERTYPE_IPV4;
        let mut ctx = ActionContext::new(key.clone());
        ctx.push_mpls(MplsLse::new(100, 0, false, 64));
        assert_eq!(ctx.key.ethertype, ETHERTYPE_MPLS_UNICAST);
        assert!(ctx.key.mpls_top.unwrap().bottom_of_stack);
        ctx.push_mpls(MplsLse::new(200, 0, true, 64));
        assert!(!ctx.key.mpls_top.unwrap().bottom_of_stack);
        assert!(ctx.pop_mpls());
        assert!(ctx.pop_mpls());
        assert_eq!(ctx.key, key);
        assert!(!ctx.pop_mpls());
        assert_eq!(ctx.pop_noops, 1);
    }

    #[test]
    fn pop_without_label_is_counted() {
        let mut sw = switch("priority=1, actions=pop_mpls,output:1");
        sw.process(&udp_frame(1, 2, 28), PortId(0), &ParserProfile::hardened()).unwrap();
        assert_eq!(sw.stats().pop_mpls_noop, 1);
        assert_eq!(sw.stats().forwards, 1);
    }

    #[test]
    fn dump_reports() {
        let sw = SwitchState::new(Vec::new(), SwitchConfig::default());
        assert_eq!(
            sw.dump_state(),
            "switch state\ncaches: enabled\nrules: 0\nmegaflows: 0\nmicroflows: 0\n\
             stats: packets=0 slow_path_upcalls=0 fast_path_hits=0 forwards=0 drops=0 \
             to_controller=0 parse_drops=0 no_rule_match=0 pop_mpls_noop=0\n"
        );

        let mut sw = switch("priority=3, l4_dst=53, actions=output:2");
        sw.process(&udp_frame(9, 53, 28), PortId(0), &ParserProfile::hardened()).unwrap();
        let dump = sw.dump_state();
        let lines: Vec<&str> = dump.lines().filter(|l| l.contains("megaflow mask")).collect();
        assert_eq!(lines, vec!["  megaflow mask=[l4_dst] key=l4_dst=53 actions=output:2 hits=0"]);
        assert_eq!(dump, sw.dump_state());
    }

    #[test]
    fn empty_frame_is_an_error() {
        let mut sw = switch("priority=1, actions=output:1");
        assert!(sw.process(&RawFrame::new(Vec::new()), PortId(0), &ParserProfile::hardened()).is_err());
    }

    #[test]
    fn microflow_capacity_is_bounded() {
        let config = SwitchConfig { microflow_capacity: 8, ..Default::default() };
        let mut sw = SwitchState::new(load_rules("priority=1, actions=output:1").unwrap(), config);
        for sport in 0..50 {
            sw.process(&udp_frame(sport, 1, 28), PortId(0), &ParserProfile::hardened()).unwrap();
        }
        assert_eq!(sw.microflow_len(), 8);
        assert_eq!(sw.stats().slow_path_upcalls, 1);
    }
}
