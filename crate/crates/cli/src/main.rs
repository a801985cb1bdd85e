use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fair_core::bench::{run_bench, BenchConfig};
use fair_core::calc::{
    bandwidth_overhead, channel_key_bytes, header_storage_bytes, key_rotation_storage, replay_capacity_bps, TraceModel,
    Weighting, PUBLISHED_ROTATION_BYTES,
};
use fair_core::sim::{parse_scenario, run_scenario, write_outputs, Report, ScenarioError};
use fair_core::wire::{decode_dump, WireError};

#[derive(Parser)]
#[command(
    name = "fair",
    version,
    about = "Forwarding accountability simulator and calculators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and print its report.
    Run {
        file: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for report and evidence files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Bandwidth overhead of the marking header.
    Overhead {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = WeightingArg::ByteShare)]
        weighting: WeightingArg,
    },
    /// Storage for stored headers, channel keys and rotated local keys.
    Storage {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of channels holding a shared key.
        #[arg(long, default_value_t = 50_000)]
        channels: u64,
        /// Local-key rotation period in seconds.
        #[arg(long, default_value_t = 60)]
        rotation_secs: u64,
        /// Keys rotated per period.
        #[arg(long, default_value_t = 2)]
        keys: u64,
        /// Packet size for the sequence-number capacity estimate.
        #[arg(long, default_value_t = 413.0)]
        replay_pkt_size: f64,
    },
    /// Baseline forwarding against marking throughput.
    Bench {
        #[arg(long, default_value_t = 200_000)]
        packets: usize,
        #[arg(long, default_value_t = 5)]
        hops: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 68)]
        pkt_size: usize,
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        #[arg(long, default_value_t = 18_000)]
        prefixes: usize,
    },
    /// Decode a header dump.
    Inspect { file: PathBuf },
}

#[derive(Args, Clone, Copy)]
struct ModelArgs {
    /// Start from a published trace model (1, 2 or 3).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    trace: Option<u8>,
    /// Link rate in Gbps.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    v4_size: Option<f64>,
    #[arg(long)]
    v4_share: Option<f64>,
    #[arg(long)]
    v6_size: Option<f64>,
    /// Defaults to 1 - v4 share.
    #[arg(long)]
    v6_share: Option<f64>,
    /// Seconds of traffic.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    hops: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy)]
enum WeightingArg {
    ByteShare,
    PacketShare,
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(c) => Failure::Invalid(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl ModelArgs {
    fn resolve(&self) -> Result<TraceModel, Failure> {
        let base = self.trace.map(|t| TraceModel::published()[t as usize - 1]);
        let need = |v: Option<f64>, b: Option<f64>, name: &str| {
            v.or(b)
                .ok_or_else(|| Failure::Invalid(format!("--{name} is required without --trace")))
        };
        let share_v4 = need(self.v4_share, base.map(|b| b.share_v4), "v4-share")?;
        let m = TraceModel {
            rate_gbps: need(self.rate, base.map(|b| b.rate_gbps), "rate")?,
            mean_pkt_v4: need(self.v4_size, base.map(|b| b.mean_pkt_v4), "v4-size")?,
            share_v4,
            mean_pkt_v6: need(self.v6_size, base.map(|b| b.mean_pkt_v6), "v6-size")?,
            share_v6: self
                .v6_share
                .or(if self.v4_share.is_some() {
                    None
                } else {
                    base.map(|b| b.share_v6)
                })
                .unwrap_or(1.0 - share_v4),
            duration_secs: self.duration.or(base.map(|b| b.duration_secs)).unwrap_or(3600.0),
            path_hops: self.hops.or(base.map(|b| b.path_hops)).unwrap_or(5),
        };
        m.validate().map_err(|e| Failure::Invalid(e.into()))?;
        Ok(m)
    }
}

fn cmd_run(file: &Path, seed: Option<u64>, out: Option<PathBuf>, json: bool) -> Result<String, Failure> {
    let text = std::fs::read_to_string(file).map_err(|e| Failure::Runtime(format!("{}: {e}", file.display())))?;
    let mut cfg = parse_scenario(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", file.display())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let result = run_scenario(&cfg)?;
    let out = out.or_else(|| {
        cfg.output
            .dir
            .as_ref()
            .map(|d| file.parent().unwrap_or(Path::new(".")).join(d))
    });
    if let Some(dir) = out {
        write_outputs(&result, &dir, json || cfg.output.json)?;
    }
    let report = Report::from_result(&result);
    Ok(if json {
        report.to_json() + "\n"
    } else {
        report.to_text()
    })
}

fn cmd_overhead(m: &TraceModel, weighting: WeightingArg) -> String {
    let w = match weighting {
        WeightingArg::ByteShare => Weighting::ByteShare,
        WeightingArg::PacketShare => Weighting::PacketShare,
    };
    let o = bandwidth_overhead(m, w);
    let mut s = String::new();
    let _ = writeln!(s, "hops: {}", m.path_hops);
    let _ = writeln!(
        s,
        "weighting: {}",
        match w {
            Weighting::ByteShare => "byte_share",
            Weighting::PacketShare => "packet_share",
        }
    );
    let _ = writeln!(s, "overhead.v4: {:.4}%", o.v4 * 100.0);
    let _ = writeln!(s, "overhead.v6: {:.4}%", o.v6 * 100.0);
    let _ = writeln!(s, "overhead.total: {:.4}%", o.total * 100.0);
    let _ = writeln!(s, "overhead.within_2pct: {}", o.total <= 0.02);
    s
}

fn cmd_storage(m: &TraceModel, channels: u64, rotation_secs: u64, keys: u64, replay_pkt: f64) -> String {
    let mut s = String::new();
    let headers = header_storage_bytes(m);
    let rot = key_rotation_storage(rotation_secs, keys);
    let _ = writeln!(s, "destination.header_bytes: {headers:.0}");
    let _ = writeln!(s, "destination.header_gb: {:.2}", headers / 1e9);
    let _ = writeln!(s, "source.channel_key_bytes: {}", channel_key_bytes(channels));
    let _ = writeln!(s, "transit.key_epochs: {}", rot.epochs);
    let _ = writeln!(s, "transit.key_bytes: {}", rot.bytes);
    if rot.differs_from_published {
        let _ = writeln!(s, "transit.key_bytes_published: {PUBLISHED_ROTATION_BYTES}");
        let _ = writeln!(s, "transit.key_bytes_discrepancy: true");
    }
    let _ = writeln!(
        s,
        "replay_capacity.gbps: {:.2}",
        replay_capacity_bps((1u64 << 24) as f64, replay_pkt, 3.0) / 1e9
    );
    let _ = writeln!(
        s,
        "replay_capacity.decimal_16m_gbps: {:.2}",
        replay_capacity_bps(16e6, replay_pkt, 3.0) / 1e9
    );
    s
}

fn cmd_bench(cfg: BenchConfig) -> Result<String, Failure> {
    let r = run_bench(&cfg).map_err(|e| Failure::Invalid(e.to_string()))?;
    let mut s = String::new();
    let _ = writeln!(s, "packets: {}", cfg.packets);
    let _ = writeln!(s, "hops: {}", cfg.hops);
    let _ = writeln!(s, "workers: {}", cfg.workers);
    let _ = writeln!(s, "pkt_size: {}", cfg.pkt_size);
    let _ = writeln!(s, "baseline_pps: {:.0}", r.baseline_pps);
    let _ = writeln!(s, "fair_pps: {:.0}", r.fair_pps);
    let _ = writeln!(s, "overhead: {:.2}%", r.overhead * 100.0);
    let _ = writeln!(s, "overhead_stddev: {:.2}%", r.overhead_stddev() * 100.0);
    Ok(s)
}

fn cmd_inspect(file: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(file).map_err(|e| Failure::Runtime(format!("{}: {e}", file.display())))?;
    let records = decode_dump(&bytes).map_err(|e: WireError| Failure::Invalid(format!("{}: {e}", file.display())))?;
    let mut s = String::new();
    let _ = writeln!(s, "records: {}", records.len());
    let _ = writeln!(
        s,
        "{:>6} {:>20} {:>3} {:>6} {:>5} {:>8} {:>4} {:>3} {:>2} slots",
        "#", "arrival", "ip", "len", "ts", "seqno", "icv", "idx", "sb"
    );
    let mut groups: BTreeMap<(u16, u32), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let f = &r.fair;
        let slots: Vec<String> = f.slots.iter().map(|x| format!("{:x}/{:x}", x.nonce, x.mac)).collect();
        let _ = writeln!(
            s,
            "{:>6} {:>20} {:>3} {:>6} {:>5} {:>8} {:>4} {:>3} {:>2} {}",
            i,
            r.arrival.to_string(),
            match r.net.version {
                fair_core::wire::IpVersion::V4 => "v4",
                fair_core::wire::IpVersion::V6 => "v6",
            },
            r.net.payload_len,
            f.timestamp,
            f.seqno,
            format!("{:02x}", f.icv),
            f.next_as.index(),
            u8::from(f.next_as.suspicious()),
            slots.join(" ")
        );
        groups.entry((f.timestamp, f.seqno)).or_default().push(i);
    }
    let dups: Vec<_> = groups.into_iter().filter(|(_, v)| v.len() > 1).collect();
    let _ = writeln!(s, "duplicate_groups: {}", dups.len());
    for ((ts, seq), members) in dups {
        let list: Vec<String> = members.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "duplicate ts={ts} seqno={seq}: {}", list.join(","));
    }
    Ok(s)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run { file, seed, out, json } => cmd_run(&file, seed, out, json),
        Command::Overhead { model, weighting } => model.resolve().map(|m| cmd_overhead(&m, weighting)),
        Command::Storage {
            model,
            channels,
            rotation_secs,
            keys,
            replay_pkt_size,
        } => {
            let model = if model.trace.is_none() && model.rate.is_none() {
                ModelArgs {
                    trace: Some(1),
                    ..model
                }
            } else {
                model
            };
            if rotation_secs == 0 {
                Err(Failure::Invalid("--rotation-secs must be positive".into()))
            } else {
                model
                    .resolve()
                    .map(|m| cmd_storage(&m, channels, rotation_secs, keys, replay_pkt_size))
            }
        }
        Command::Bench {
            packets,
            hops,
            workers,
            pkt_size,
            rounds,
            prefixes,
        } => cmd_bench(BenchConfig {
            packets,
            hops,
            workers,
            pkt_size,
            prefixes,
            rounds,
            ..BenchConfig::default()
        }),
        Command::Inspect { file } => cmd_inspect(&file),
    };
    match result {
        Ok(out) => {
            // a closed pipe downstream is not an error
            let _ = std::io::stdout().write_all(out.as_bytes());
            ExitCode::SUCCESS
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
