//! Command-line front end. Every subcommand reads and writes files only.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::attacks::{craft, diff_fuzz, AttackKind, AttackSpec, MutationBudget};
use crate::bench::{default_switch, run_latency, run_throughput, BenchConfig, PathMode};
use crate::extract::{extract, ParserMode, ParserProfile, Verdict};
use crate::flowtable::{load_rules, SwitchConfig, SwitchState};
use crate::packet::{read_pcap, write_pcap, PortId};
use crate::wormsim::{simulate, simulate_dos, StageTimings, Topology};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "shimguard", version, about = "Virtual-switch parser vulnerability lab (file I/O only)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one attack frame to a pcap file.
    Craft(CraftArgs),
    /// Print the flow key and corruption events of every frame in a pcap.
    Extract(ExtractArgs),
    /// Run a pcap through a switch and print dispositions and switch state.
    Pipeline(PipelineArgs),
    /// Differential fuzzing of the parser profiles.
    Fuzz(FuzzArgs),
    /// Worm propagation timeline, or the DoS outage model.
    Wormsim(WormArgs),
    /// Slow path and fast path throughput and latency.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    LongShim,
    ShortShim,
    AclBypass,
}

impl From<KindArg> for AttackKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::LongShim => AttackKind::LongShim,
            KindArg::ShortShim => AttackKind::ShortShim,
            KindArg::AclBypass => AttackKind::AclBypass,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProfileArg {
    Hardened,
    V232,
    V240,
    V250,
}

impl From<ProfileArg> for ParserMode {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Hardened => ParserMode::Hardened,
            ProfileArg::V232 => ParserMode::Vuln232,
            ProfileArg::V240 => ParserMode::Vuln240,
            ProfileArg::V250 => ParserMode::Vuln250,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Slow,
    Fast,
}

#[derive(Debug, Args)]
pub struct CraftArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Frame size in octets (long-shim).
    #[arg(long)]
    pub size: Option<usize>,
    /// IPv4 total length, below 20 (acl-bypass).
    #[arg(long)]
    pub total_length: Option<u16>,
    /// UDP destination port (acl-bypass).
    #[arg(long)]
    pub dport: Option<u16>,
    /// Octets of the truncated entry, 1 to 3 (short-shim).
    #[arg(long)]
    pub fragment_len: Option<usize>,
    /// File whose contents are packed into the label stack (long-shim).
    #[arg(long)]
    pub payload: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub profile: ProfileArg,
    #[arg(long)]
    pub label_limit: Option<u32>,
    #[arg(long, default_value_t = 1)]
    pub in_port: u32,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long, value_enum)]
    pub profile: ProfileArg,
    #[arg(long)]
    pub label_limit: Option<u32>,
    /// Disable the megaflow and microflow caches.
    #[arg(long)]
    pub no_megaflow: bool,
    #[arg(long, default_value_t = 1)]
    pub in_port: u32,
}

#[derive(Debug, Args)]
pub struct FuzzArgs {
    /// Seed frames.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub iters: u64,
    #[arg(long, env = "SHIMGUARD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated; must include hardened and a vulnerable profile.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "hardened,v232,v240,v250")]
    pub profiles: Vec<ProfileArg>,
    #[arg(long)]
    pub label_limit: Option<u32>,
    #[arg(long)]
    pub out_report: Option<PathBuf>,
    /// Minimized exemplar per class, as a pcap.
    #[arg(long)]
    pub out_exemplars: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WormArgs {
    /// Compute nodes, not counting the controller.
    #[arg(long)]
    pub nodes: usize,
    /// Compute node hosting the attacker VM.
    #[arg(long, default_value_t = 0)]
    pub attacker_host: usize,
    /// Stage timing override in seconds, e.g. `restart_sleep=12`.
    /// Keys: exploit_send, download, restart_sleep, hop_overhead,
    /// controller_restore, dos_outage.
    #[arg(long, value_parser = parse_timing)]
    pub timing: Vec<(String, f64)>,
    /// Model repeated DoS attacks instead of the worm.
    #[arg(long)]
    pub dos: bool,
    #[arg(long, default_value_t = 1, requires = "dos")]
    pub repeats: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Comma-separated offered rates in packets per second.
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<u64>>,
    /// Seconds per rate; 120 matches the full methodology.
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
    /// Comma-separated frame sizes for the latency run.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub latency_count: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long, env = "SHIMGUARD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Throughput table; the latency table goes next to it as `<stem>_latency.csv`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_timing(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("bad number in `{s}`"))?;
    Ok((k.trim().to_string(), v))
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let outcome = match cli.command {
        Command::Craft(a) => cmd_craft(a, out),
        Command::Extract(a) => cmd_extract(a, out),
        Command::Pipeline(a) => cmd_pipeline(a, out),
        Command::Fuzz(a) => cmd_fuzz(a, out),
        Command::Wormsim(a) => cmd_wormsim(a, out),
        Command::Bench(a) => cmd_bench(a, out, err),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FINDINGS
        }
    }
}

fn profile(arg: ProfileArg, label_limit: Option<u32>) -> Result<ParserProfile, Failure> {
    let p = ParserProfile::new(arg.into());
    match label_limit {
        Some(n) => p.with_label_limit(n).map_err(Failure::usage),
        None => Ok(p),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn cmd_craft(a: CraftArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let mut spec = AttackSpec::new(a.kind.into());
    if let Some(size) = a.size {
        spec.frame_size = size;
    }
    if let Some(tl) = a.total_length {
        spec.total_length = tl;
    }
    if let Some(dport) = a.dport {
        spec.dport = dport;
    }
    if let Some(r) = a.fragment_len {
        spec.fragment_len = r;
    }
    if let Some(path) = &a.payload {
        let data = fs::read(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
        spec.payload = Some(data);
    }
    let frame = craft(&spec).map_err(Failure::usage)?;
    let len = frame.capture_len();
    write_pcap(&a.out, &[frame]).map_err(Failure::runtime)?;
    let _ = writeln!(out, "wrote {} frame of {len} octets to {}", spec.kind.as_str(), a.out.display());
    Ok(EXIT_OK)
}

fn cmd_extract(a: ExtractArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let profile = profile(a.profile, a.label_limit)?;
    let frames = read_pcap(&a.input).map_err(Failure::runtime)?;
    for (i, frame) in frames.iter().enumerate() {
        let verdict_and_key = match extract(frame, PortId(a.in_port), &profile) {
            Ok(r) => r,
            Err(e) => {
                let _ = writeln!(out, "frame {i} len={} error={e}", frame.capture_len());
                continue;
            }
        };
        let verdict = match verdict_and_key.verdict {
            Verdict::Accept => "accept",
            Verdict::Drop => "drop",
        };
        let _ = writeln!(
            out,
            "frame {i} len={} verdict={verdict} status={} class={}",
            frame.capture_len(),
            verdict_and_key.key.parse_status,
            verdict_and_key.class()
        );
        let _ = writeln!(out, "  key {}", verdict_and_key.key);
        for ev in &verdict_and_key.events {
            let _ = writeln!(out, "  event {ev}");
        }
    }
    Ok(EXIT_OK)
}

fn cmd_pipeline(a: PipelineArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let profile = profile(a.profile, a.label_limit)?;
    let text = fs::read_to_string(&a.rules)
        .map_err(|e| Failure::runtime(format!("{}: {e}", a.rules.display())))?;
    let rules = load_rules(&text).map_err(Failure::usage)?;
    let frames = read_pcap(&a.input).map_err(Failure::runtime)?;
    let config = SwitchConfig { megaflow_enabled: !a.no_megaflow, ..SwitchConfig::default() };
    let mut switch = SwitchState::new(rules, config);
    for (i, frame) in frames.iter().enumerate() {
        match switch.process(frame, PortId(a.in_port), &profile) {
            Ok(d) => {
                let _ = writeln!(out, "frame {i} disposition={d}");
            }
            Err(e) => {
                let _ = writeln!(out, "frame {i} error={e}");
            }
        }
    }
    let _ = write!(out, "{}", switch.dump_state());
    Ok(EXIT_OK)
}

fn cmd_fuzz(a: FuzzArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let mut profiles = Vec::new();
    for p in &a.profiles {
        let p = profile(*p, a.label_limit)?;
        if !profiles.contains(&p) {
            profiles.push(p);
        }
    }
    let corpus = read_pcap(&a.corpus).map_err(Failure::runtime)?;
    let budget = MutationBudget::new(a.iters, a.seed);
    let report = diff_fuzz(&corpus, &budget, &profiles).map_err(Failure::usage)?;
    let text = report.to_text();
    let _ = write!(out, "{text}");
    if let Some(path) = &a.out_report {
        write_file(path, &text)?;
    }
    if let Some(path) = &a.out_exemplars {
        write_pcap(path, &report.exemplar_frames()).map_err(Failure::runtime)?;
    }
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_FINDINGS })
}

fn cmd_wormsim(a: WormArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let topology = Topology::new(a.nodes, a.attacker_host).map_err(Failure::usage)?;
    let mut timings = StageTimings::default();
    for (k, v) in &a.timing {
        timings.set(k, *v).map_err(Failure::usage)?;
    }
    if a.dos {
        let outages = simulate_dos(&topology, &timings, a.repeats).map_err(Failure::usage)?;
        let mut csv = String::from("node,start_s,end_s\n");
        for o in &outages {
            for iv in &o.intervals {
                csv.push_str(&format!("{},{},{}\n", o.node, iv.start, iv.end));
            }
        }
        let _ = write!(out, "{csv}");
        for o in outages.iter().filter(|o| o.total() > 0.0) {
            let _ = writeln!(out, "total_outage_s node={} value={}", o.node, o.total());
        }
        if let Some(path) = &a.csv {
            write_file(path, &csv)?;
        }
        return Ok(EXIT_OK);
    }
    let timeline = simulate(&topology, &timings).map_err(Failure::usage)?;
    let csv = timeline.to_csv();
    let _ = write!(out, "{csv}");
    let _ = writeln!(out, "{}", timeline.summary_line());
    if let Some(path) = &a.csv {
        write_file(path, &csv)?;
    }
    Ok(EXIT_OK)
}

fn latency_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_latency.csv"))
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let mode = match a.mode {
        ModeArg::Slow => PathMode::AllSlowPath,
        ModeArg::Fast => PathMode::AllFastPath,
    };
    let mut config = BenchConfig { duration_s: a.duration, seed: a.seed, ..BenchConfig::new(mode) };
    if let Some(rates) = a.rates {
        config.rates_pps = rates;
    }
    if let Some(sizes) = a.sizes {
        config.packet_sizes = sizes;
    }
    if let Some(n) = a.latency_count {
        config.latency_count = n;
    }
    if let Some(n) = a.warmup {
        config.warmup_drop = n;
    }
    config.validate().map_err(Failure::usage)?;

    let mut switch = default_switch();
    let throughput = run_throughput(&config, &mut switch).map_err(Failure::usage)?;
    let latency = run_latency(&config, &mut switch).map_err(Failure::usage)?;
    for w in &throughput.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let t_csv = throughput.throughput_csv();
    let l_csv = latency.latency_csv();
    let _ = write!(out, "{t_csv}\n{l_csv}");
    if let Some(path) = &a.csv {
        write_file(path, &t_csv)?;
        write_file(&latency_path(path), &l_csv)?;
    }
    Ok(EXIT_OK)
}
