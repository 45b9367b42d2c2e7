//! Slow path versus fast path measurements of the in-process pipeline.
//!
//! Throughput runs in virtual time. Frame `i` of a run at `r` pps is due at
//! `i / r` seconds. The generator and the pipeline are two stages joined by
//! a bounded queue; each stage's cost per frame is the wall time it actually
//! took, measured with a monotonic clock, and the stages advance their own
//! virtual clocks by that amount. A frame that finds the queue full is lost.
//! Frames the generator cannot produce before the run ends count as
//! generator shortfall.
//!
//! Latency is the wall time from just before extraction to the disposition.
//! Frames are spaced `interval_ms` apart in virtual time, far longer than a
//! frame takes, so there is no queueing and the spacing is not slept.

use std::collections::VecDeque;
use std::fmt;
use std::fmt::Write as _;
use std::net::Ipv4Addr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::extract::ParserProfile;
use crate::flowtable::{load_rules, Disposition, SwitchConfig, SwitchState};
use crate::packet::{
    encode_frame, EthernetHeader, Ipv4Header, Layer, MacAddr, PortId, RawFrame, UdpHeader,
    ETHERTYPE_IPV4, IPPROTO_UDP,
};

/// Size of the frames used for throughput runs.
pub const THROUGHPUT_FRAME_LEN: usize = 60;
/// Ethernet, IPv4 and UDP headers with no payload.
pub const MIN_UDP_FRAME_LEN: usize = 42;

pub const DEFAULT_PACKET_SIZES: [usize; 5] = [44, 512, 1500, 2048, 9000];

pub const THROUGHPUT_CSV_HEADER: &str = "mode,rate_pps,offered,forwarded,loss_fraction";
pub const LATENCY_CSV_HEADER: &str = "mode,size_b,median_us,p95_us,variance_us2";

/// A small ACL: block a few well-known service ports, punt ARP, forward
/// everything else.
pub const DEFAULT_RULES: &str = "\
priority=100, eth_type=0x0800, ip_proto=6, l4_dst=22, actions=drop
priority=100, eth_type=0x0800, ip_proto=6, l4_dst=23, actions=drop
priority=100, eth_type=0x0800, ip_proto=6, l4_dst=135, actions=drop
priority=100, eth_type=0x0800, ip_proto=6, l4_dst=139, actions=drop
priority=100, eth_type=0x0800, ip_proto=6, l4_dst=445, actions=drop
priority=50, eth_type=0x0806, actions=controller
priority=1, actions=output:1
";

const BENCH_PORT: PortId = PortId(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathMode {
    /// Every frame is a new flow and the caches are off.
    AllSlowPath,
    /// The same frame over and over.
    AllFastPath,
}

impl PathMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PathMode::AllSlowPath => "slow",
            PathMode::AllFastPath => "fast",
        }
    }
}

impl fmt::Display for PathMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PathMode {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "slow" => Ok(PathMode::AllSlowPath),
            "fast" => Ok(PathMode::AllFastPath),
            _ => Err(BenchError::InvalidConfig(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("invalid bench config: {0}")]
    InvalidConfig(String),
    #[error("generator could not sustain {rate} pps")]
    RateUnachievable { rate: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub path_mode: PathMode,
    pub rates_pps: Vec<u64>,
    /// Seconds of virtual time per rate.
    pub duration_s: f64,
    pub packet_sizes: Vec<usize>,
    pub latency_count: usize,
    pub warmup_drop: usize,
    pub interval_ms: u64,
    /// Slots between generator and pipeline.
    pub queue_capacity: usize,
    /// Seeds the random headers of slow-path frames.
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(path_mode: PathMode) -> Self {
        BenchConfig {
            path_mode,
            rates_pps: (1..=10).map(|k| k * 10_000).collect(),
            duration_s: 120.0,
            packet_sizes: DEFAULT_PACKET_SIZES.to_vec(),
            latency_count: 10_500,
            warmup_drop: 500,
            interval_ms: 100,
            queue_capacity: 1024,
            seed: 0,
        }
    }

    /// Same as [`BenchConfig::new`] with five seconds per rate.
    pub fn ci(path_mode: PathMode) -> Self {
        BenchConfig { duration_s: 5.0, ..Self::new(path_mode) }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::InvalidConfig(msg));
        if self.warmup_drop >= self.latency_count {
            return bad(format!(
                "warmup_drop {} must be below latency_count {}",
                self.warmup_drop, self.latency_count
            ));
        }
        if self.rates_pps.windows(2).any(|w| w[0] >= w[1]) {
            return bad("rates must be strictly ascending".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration {} must be positive", self.duration_s));
        }
        if let Some(&s) = self.packet_sizes.iter().find(|&&s| !(MIN_UDP_FRAME_LEN..=65535).contains(&s)) {
            return bad(format!("packet size {s} outside {MIN_UDP_FRAME_LEN}..=65535"));
        }
        if self.queue_capacity == 0 {
            return bad("queue capacity must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub rate_pps: u64,
    pub offered: u64,
    pub forwarded: u64,
    /// Dropped by the pipeline or lost at the full queue.
    pub dropped: u64,
    pub generator_shortfall: u64,
    pub offered_pps: f64,
    pub forwarded_pps: f64,
    pub loss_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyPoint {
    pub size_b: usize,
    pub samples: usize,
    pub median_us: f64,
    pub p95_us: f64,
    pub variance_us2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub mode: PathMode,
    pub throughput: Vec<RatePoint>,
    pub latency: Vec<LatencyPoint>,
    /// Rates the generator fell short of. Reported, not fatal.
    pub warnings: Vec<BenchError>,
}

impl BenchResult {
    fn empty(mode: PathMode) -> Self {
        BenchResult { mode, throughput: Vec::new(), latency: Vec::new(), warnings: Vec::new() }
    }

    pub fn throughput_csv(&self) -> String {
        let mut out = format!("{THROUGHPUT_CSV_HEADER}\n");
        for p in &self.throughput {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                self.mode, p.rate_pps, p.offered, p.forwarded, p.loss_fraction
            );
        }
        out
    }

    pub fn latency_csv(&self) -> String {
        let mut out = format!("{LATENCY_CSV_HEADER}\n");
        for p in &self.latency {
            let _ = writeln!(
                out,
                "{},{},{:.3},{:.3},{:.6}",
                self.mode, p.size_b, p.median_us, p.p95_us, p.variance_us2
            );
        }
        out
    }
}

/// A switch loaded with [`DEFAULT_RULES`].
pub fn default_switch() -> SwitchState {
    let rules = load_rules(DEFAULT_RULES).expect("built-in rules parse");
    SwitchState::new(rules, SwitchConfig::default())
}

/// UDP frame of exactly `size` octets (at least [`MIN_UDP_FRAME_LEN`]).
pub fn udp_frame(
    size: usize,
    src_mac: MacAddr,
    src: Ipv4Addr,
    dst: Ipv4Addr,
    sport: u16,
    dport: u16,
) -> RawFrame {
    let payload_len = size.saturating_sub(MIN_UDP_FRAME_LEN);
    let udp = UdpHeader {
        src_port: sport,
        dst_port: dport,
        length: (UdpHeader::LEN + payload_len) as u16,
        checksum: 0,
    };
    let ip = Ipv4Header {
        total_length: (20 + UdpHeader::LEN + payload_len) as u16,
        protocol: IPPROTO_UDP,
        src,
        dst,
        ..Default::default()
    };
    let eth = EthernetHeader { src_mac, ..EthernetHeader::new(ETHERTYPE_IPV4) };
    encode_frame(&eth, &[Layer::Ipv4(ip), Layer::Udp(udp)], &vec![0; payload_len])
        .expect("ipv4 layering is consistent")
}

struct FrameSource {
    mode: PathMode,
    rng: ChaCha8Rng,
}

impl FrameSource {
    fn new(mode: PathMode, seed: u64) -> Self {
        FrameSource { mode, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn frame(&mut self, size: usize) -> RawFrame {
        match self.mode {
            PathMode::AllFastPath => udp_frame(
                size,
                MacAddr([0x02, 0, 0, 0, 0, 0x10]),
                Ipv4Addr::new(10, 0, 0, 10),
                Ipv4Addr::new(10, 0, 0, 20),
                5000,
                6000,
            ),
            PathMode::AllSlowPath => {
                let mut mac: [u8; 6] = self.rng.random();
                // unicast, locally administered
                mac[0] = (mac[0] & 0xfc) | 0x02;
                let src = Ipv4Addr::from(self.rng.random::<u32>());
                let dst = Ipv4Addr::from(self.rng.random::<u32>());
                let sport = self.rng.random_range(1024..=u16::MAX);
                let dport = self.rng.random_range(1024..=u16::MAX);
                udp_frame(size, MacAddr(mac), src, dst, sport, dport)
            }
        }
    }
}

fn prepare(config: &BenchConfig, state: &mut SwitchState) -> Result<(), BenchError> {
    config.validate()?;
    state.set_megaflow_enabled(config.path_mode == PathMode::AllFastPath);
    state.flush_caches();
    Ok(())
}

/// Drives 60-octet UDP frames through `state` at each offered rate.
pub fn run_throughput(config: &BenchConfig, state: &mut SwitchState) -> Result<BenchResult, BenchError> {
    prepare(config, state)?;
    let profile = ParserProfile::hardened();
    let mut source = FrameSource::new(config.path_mode, config.seed);
    let mut result = BenchResult::empty(config.path_mode);

    for &rate in config.rates_pps.iter().filter(|&&r| r > 0) {
        let offered = (rate as f64 * config.duration_s).round() as u64;
        let end = config.duration_s;
        let mut generator_clock = 0.0f64;
        let mut pipeline_clock = 0.0f64;
        // completion times of frames queued or in service
        let mut in_flight: VecDeque<f64> = VecDeque::with_capacity(config.queue_capacity);
        let (mut generated, mut forwarded, mut dropped) = (0u64, 0u64, 0u64);

        for i in 0..offered {
            let due = i as f64 / rate as f64;
            let t0 = Instant::now();
            let frame = source.frame(THROUGHPUT_FRAME_LEN);
            generator_clock = generator_clock.max(due) + t0.elapsed().as_secs_f64();
            if generator_clock > end {
                break;
            }
            generated += 1;

            while in_flight.front().is_some_and(|&done| done <= generator_clock) {
                in_flight.pop_front();
            }
            if in_flight.len() >= config.queue_capacity {
                dropped += 1;
                continue;
            }
            let t1 = Instant::now();
            let disposition = state.process(&frame, BENCH_PORT, &profile);
            let service = t1.elapsed().as_secs_f64();
            pipeline_clock = pipeline_clock.max(generator_clock) + service;
            in_flight.push_back(pipeline_clock);
            match disposition {
                Ok(Disposition::Forwarded(_)) => forwarded += 1,
                _ => dropped += 1,
            }
        }

        let shortfall = offered - generated;
        if shortfall > 0 {
            result.warnings.push(BenchError::RateUnachievable { rate });
        }
        let loss_fraction = if offered == 0 { 0.0 } else { 1.0 - forwarded as f64 / offered as f64 };
        result.throughput.push(RatePoint {
            rate_pps: rate,
            offered,
            forwarded,
            dropped,
            generator_shortfall: shortfall,
            offered_pps: offered as f64 / config.duration_s,
            forwarded_pps: forwarded as f64 / config.duration_s,
            loss_fraction,
        });
    }
    Ok(result)
}

/// Per-size latency of `latency_count` frames, the first `warmup_drop`
/// discarded.
pub fn run_latency(config: &BenchConfig, state: &mut SwitchState) -> Result<BenchResult, BenchError> {
    prepare(config, state)?;
    let profile = ParserProfile::hardened();
    let mut source = FrameSource::new(config.path_mode, config.seed);
    let mut result = BenchResult::empty(config.path_mode);

    for &size in &config.packet_sizes {
        let mut samples = Vec::with_capacity(config.latency_count - config.warmup_drop);
        for i in 0..config.latency_count {
            let frame = source.frame(size);
            let t0 = Instant::now();
            let _ = state.process(&frame, BENCH_PORT, &profile);
            let us = t0.elapsed().as_secs_f64() * 1e6;
            if i >= config.warmup_drop {
                samples.push(us);
            }
        }
        result.latency.push(summarize(size, samples));
    }
    Ok(result)
}

fn summarize(size_b: usize, mut samples: Vec<f64>) -> LatencyPoint {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let median_us = if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    };
    // nearest rank
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    let p95_us = samples[rank - 1];
    let mean = samples.iter().sum::<f64>() / n as f64;
    let variance_us2 = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
    LatencyPoint { size_b, samples: n, median_us, p95_us, variance_us2 }
}
