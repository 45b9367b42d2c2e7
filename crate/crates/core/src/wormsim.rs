//! Worm propagation timeline over a controller-centric cloud.
//!
//! The worm starts in a guest VM, takes over the vswitch of the VM's
//! compute node, hops to the controller, and once the controller's network
//! is restored fans out to every other compute node at once. Timings are
//! stage durations, so the simulation is a small discrete-event run over a
//! priority queue of pending events.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, BTreeMap};
use std::fmt;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Compute(usize),
    Controller,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Compute(i) => write!(f, "compute-{i}"),
            Node::Controller => f.write_str("controller"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WormEvent {
    ExploitSent,
    ShellObtained,
    PatchedSwitchInstalled,
    Restored,
    FanoutStarted,
}

impl WormEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            WormEvent::ExploitSent => "ExploitSent",
            WormEvent::ShellObtained => "ShellObtained",
            WormEvent::PatchedSwitchInstalled => "PatchedSwitchInstalled",
            WormEvent::Restored => "Restored",
            WormEvent::FanoutStarted => "FanoutStarted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    compute_nodes: usize,
    attacker_vm_host: usize,
}

impl Topology {
    pub fn new(compute_nodes: usize, attacker_vm_host: usize) -> Result<Self, WormError> {
        if compute_nodes == 0 {
            return Err(WormError::NoComputeNodes);
        }
        if attacker_vm_host >= compute_nodes {
            return Err(WormError::AttackerHostOutOfRange { host: attacker_vm_host, compute_nodes });
        }
        Ok(Topology { compute_nodes, attacker_vm_host })
    }

    /// `n` compute nodes with the attacker's VM on the first one.
    pub fn with_nodes(n: usize) -> Result<Self, WormError> {
        Self::new(n, 0)
    }

    pub fn compute_nodes(&self) -> usize {
        self.compute_nodes
    }

    pub fn attacker_vm_host(&self) -> usize {
        self.attacker_vm_host
    }

    /// Every compute node plus the controller. The controller has a
    /// bidirectional channel to each compute node.
    pub fn nodes(&self) -> impl Iterator<Item = Node> {
        (0..self.compute_nodes).map(Node::Compute).chain(std::iter::once(Node::Controller))
    }
}

/// Stage durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTimings {
    /// Includes network transit of the exploit packet.
    pub exploit_send: f64,
    /// Patched vswitch binary, script and payload.
    pub download: f64,
    /// Restarting the vswitch and agent on a compute node.
    pub restart_sleep: f64,
    /// Unattributed time of the two measured hops, split evenly between them.
    pub hop_overhead: f64,
    pub controller_restore: f64,
    pub dos_outage: f64,
}

impl Default for StageTimings {
    fn default() -> Self {
        StageTimings {
            exploit_send: 0.0,
            download: 3.0,
            restart_sleep: 12.0,
            hop_overhead: 6.0,
            controller_restore: 60.0,
            dos_outage: 4.5,
        }
    }
}

impl StageTimings {
    pub fn zero() -> Self {
        StageTimings {
            exploit_send: 0.0,
            download: 0.0,
            restart_sleep: 0.0,
            hop_overhead: 0.0,
            controller_restore: 0.0,
            dos_outage: 0.0,
        }
    }

    pub const KEYS: [&'static str; 6] = [
        "exploit_send",
        "download",
        "restart_sleep",
        "hop_overhead",
        "controller_restore",
        "dos_outage",
    ];

    /// Sets one field by name, as used by `--timing k=v`.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), WormError> {
        if !value.is_finite() || value < 0.0 {
            return Err(WormError::InvalidTiming(format!("{key}={value}")));
        }
        let slot = match key {
            "exploit_send" => &mut self.exploit_send,
            "download" => &mut self.download,
            "restart_sleep" => &mut self.restart_sleep,
            "hop_overhead" => &mut self.hop_overhead,
            "controller_restore" => &mut self.controller_restore,
            "dos_outage" => &mut self.dos_outage,
            _ => return Err(WormError::InvalidTiming(format!("unknown timing `{key}`"))),
        };
        *slot = value;
        Ok(())
    }

    fn validate(&self) -> Result<(), WormError> {
        let fields = [
            self.exploit_send,
            self.download,
            self.restart_sleep,
            self.hop_overhead,
            self.controller_restore,
            self.dos_outage,
        ];
        if fields.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(WormError::InvalidTiming(format!("{self:?}")))
        }
    }

    /// Exploit to usable foothold on a compute node: the vswitch is replaced
    /// and restarted before the node can attack anything else.
    pub fn compute_hop(&self) -> f64 {
        self.exploit_send + self.download + self.restart_sleep + self.hop_overhead / 2.0
    }

    /// Exploit to shell on the controller.
    pub fn controller_hop(&self) -> f64 {
        self.exploit_send + self.hop_overhead / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WormError {
    #[error("topology needs at least one compute node")]
    NoComputeNodes,
    #[error("attacker host {host} out of range for {compute_nodes} compute nodes")]
    AttackerHostOutOfRange { host: usize, compute_nodes: usize },
    #[error("invalid timing: {0}")]
    InvalidTiming(String),
    #[error("at least one attack is required")]
    NoAttacks,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimelineEntry {
    pub time: f64,
    pub node: Node,
    pub event: WormEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WormTimeline {
    pub events: Vec<TimelineEntry>,
    pub total_compromise_time: f64,
}

impl WormTimeline {
    pub fn shell_time(&self, node: Node) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.node == node && e.event == WormEvent::ShellObtained)
            .map(|e| e.time)
    }

    /// `time_s,node,event` rows followed by the summary line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,node,event\n");
        for e in &self.events {
            let _ = writeln!(out, "{},{},{}", e.time, e.node, e.event.as_str());
        }
        out
    }

    pub fn summary_line(&self) -> String {
        format!("total_compromise_time_s={}", self.total_compromise_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    time: f64,
    seq: u64,
    node: Node,
    event: WormEvent,
}

impl Eq for Pending {}

impl Ord for Pending {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct EventQueue {
    heap: BinaryHeap<Pending>,
    seq: u64,
}

impl EventQueue {
    fn schedule(&mut self, time: f64, node: Node, event: WormEvent) {
        self.heap.push(Pending { time, seq: self.seq, node, event });
        self.seq += 1;
    }
}

/// Runs the propagation and returns the ordered timeline.
pub fn simulate(topology: &Topology, timings: &StageTimings) -> Result<WormTimeline, WormError> {
    timings.validate()?;
    let mut queue = EventQueue { heap: BinaryHeap::new(), seq: 0 };
    let first = Node::Compute(topology.attacker_vm_host);
    queue.schedule(0.0, first, WormEvent::ExploitSent);

    let mut events = Vec::new();
    while let Some(p) = queue.heap.pop() {
        events.push(TimelineEntry { time: p.time, node: p.node, event: p.event });
        match (p.node, p.event) {
            (Node::Compute(_), WormEvent::ExploitSent) => {
                queue.schedule(p.time + timings.compute_hop(), p.node, WormEvent::ShellObtained);
            }
            (Node::Compute(i), WormEvent::ShellObtained) => {
                queue.schedule(p.time, p.node, WormEvent::PatchedSwitchInstalled);
                if i == topology.attacker_vm_host {
                    queue.schedule(p.time, Node::Controller, WormEvent::ExploitSent);
                }
            }
            (Node::Controller, WormEvent::ExploitSent) => {
                queue.schedule(p.time + timings.controller_hop(), p.node, WormEvent::ShellObtained);
            }
            (Node::Controller, WormEvent::ShellObtained) => {
                // fan-out waits for the controller's network to come back
                queue.schedule(p.time + timings.controller_restore, p.node, WormEvent::Restored);
            }
            (Node::Controller, WormEvent::Restored) if topology.compute_nodes > 1 => {
                queue.schedule(p.time, p.node, WormEvent::FanoutStarted);
            }
            (Node::Controller, WormEvent::FanoutStarted) => {
                for i in (0..topology.compute_nodes).filter(|&i| i != topology.attacker_vm_host) {
                    queue.schedule(p.time, Node::Compute(i), WormEvent::ExploitSent);
                }
            }
            _ => {}
        }
    }

    let total_compromise_time = events
        .iter()
        .filter(|e| e.event == WormEvent::ShellObtained)
        .map(|e| e.time)
        .fold(0.0, f64::max);
    Ok(WormTimeline { events, total_compromise_time })
}

/// A closed outage interval `[start, end]` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Unions overlapping or touching intervals.
pub fn merge_intervals(mut intervals: Vec<Interval>) -> Vec<Interval> {
    intervals.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
            _ => merged.push(iv),
        }
    }
    merged
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeOutage {
    pub node: Node,
    pub intervals: Vec<Interval>,
}

impl NodeOutage {
    pub fn total(&self) -> f64 {
        self.intervals.iter().map(Interval::duration).sum()
    }
}

/// Outage per node for attacks launched at the given times. Each attack
/// crashes the vswitch of the attacker VM's host for `dos_outage` seconds;
/// other nodes see no outage of their own.
pub fn simulate_dos_at(
    topology: &Topology,
    timings: &StageTimings,
    attack_times: &[f64],
) -> Result<Vec<NodeOutage>, WormError> {
    timings.validate()?;
    if attack_times.is_empty() {
        return Err(WormError::NoAttacks);
    }
    let target = Node::Compute(topology.attacker_vm_host);
    let mut per_node: BTreeMap<Node, Vec<Interval>> = topology.nodes().map(|n| (n, Vec::new())).collect();
    let raw = attack_times
        .iter()
        .map(|&t| Interval { start: t, end: t + timings.dos_outage })
        .collect();
    per_node.insert(target, merge_intervals(raw));
    Ok(per_node.into_iter().map(|(node, intervals)| NodeOutage { node, intervals }).collect())
}

/// `repeats` attacks, each sent the moment the previous outage ends.
pub fn simulate_dos(
    topology: &Topology,
    timings: &StageTimings,
    repeats: usize,
) -> Result<Vec<NodeOutage>, WormError> {
    let times: Vec<f64> = (0..repeats).map(|k| k as f64 * timings.dos_outage).collect();
    simulate_dos_at(topology, timings, &times)
}
