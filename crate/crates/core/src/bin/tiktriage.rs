//! Command-line front end: classify honeypot data, aggregate scan
//! landscapes, generate synthetic corpora.
//!
//! Exit codes: 0 success, 2 success with data-quality warnings,
//! 1 fatal configuration or I/O error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tiktriage::analytics::{Bucket, CampaignParams};
use tiktriage::landscape::{ip_overlap, load_ip_list, DEFAULT_FILTER};
use tiktriage::report::{self, diag, RunConfig};
use tiktriage::synth::{generate_corpus, ScenarioConfig, DEFAULT_SENSORS, SCENARIO_NAMES};

#[derive(Parser)]
#[command(
    name = "tiktriage",
    about = "Batch attack classification for low-cost-router honeypot data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify captures and logs into attack events and analytics reports
    Classify(ClassifyArgs),
    /// Aggregate banner-scan dumps into landscape tables
    Landscape(LandscapeArgs),
    /// Generate a synthetic corpus with a ground-truth manifest
    Generate(GenerateArgs),
    /// Intersection report for two IP list files
    Overlap(OverlapArgs),
}

#[derive(Args)]
struct ClassifyArgs {
    /// Directory of capture files (DIR/<sensor>/**/*.pcap)
    #[arg(long)]
    captures: Option<PathBuf>,
    /// Directory of log files (DIR/<sensor>/**/*.log)
    #[arg(long)]
    logs: Option<PathBuf>,
    /// Signature database files; bundled set when omitted
    #[arg(long = "signatures")]
    signatures: Vec<PathBuf>,
    /// CIDR,country,asn,as_name mapping file
    #[arg(long)]
    attribution: Option<PathBuf>,
    /// Report output directory
    #[arg(long)]
    out: PathBuf,
    /// Flow idle timeout in seconds
    #[arg(long = "idle-timeout", default_value_t = 60)]
    idle_timeout: u64,
    /// Brute-force window in seconds
    #[arg(long = "bf-window", default_value_t = 60)]
    bf_window: u64,
    /// Brute-force attempt threshold
    #[arg(long = "bf-threshold", default_value_t = 5)]
    bf_threshold: u32,
    /// Minimum flows per campaign
    #[arg(long = "campaign-min-flows", default_value_t = 100)]
    campaign_min_flows: u64,
    /// Fraction of flows one source port must cover
    #[arg(long = "static-port-frac", default_value_t = 0.9)]
    static_port_frac: f64,
    /// Volume outlier threshold in standard deviations
    #[arg(long = "volume-sigma", default_value_t = 3.0)]
    volume_sigma: f64,
    /// Time-series bucket
    #[arg(long, default_value = "day", value_parser = parse_bucket)]
    bucket: Bucket,
    /// Worker threads (0 = number of processors)
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Tolerate data-quality problems instead of failing
    #[arg(long)]
    lax: bool,
}

fn parse_bucket(s: &str) -> Result<Bucket, String> {
    Bucket::parse(s).ok_or_else(|| format!("bucket must be `hour` or `day`, got `{s}`"))
}

#[derive(Args)]
struct LandscapeArgs {
    /// Directory of line-delimited scan dumps
    #[arg(long)]
    scans: PathBuf,
    /// Device filter substring (case-insensitive)
    #[arg(long, default_value = DEFAULT_FILTER)]
    filter: String,
    /// Rows per table
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Report output directory
    #[arg(long)]
    out: PathBuf,
    /// Skip unparsable lines instead of failing
    #[arg(long)]
    lax: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Corpus output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    days: u32,
    /// Comma-separated sensor ids
    #[arg(long, default_value = "au,br,cn,in,nl,us")]
    sensors: String,
    /// Scenario weights as name=weight; repeatable. Default: every
    /// scenario at weight 1
    #[arg(long = "scenario")]
    scenarios: Vec<String>,
}

#[derive(Args)]
struct OverlapArgs {
    /// First IP list (one address per line)
    list_a: PathBuf,
    /// Second IP list
    list_b: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Classify(args) => cmd_classify(args),
        Command::Landscape(args) => cmd_landscape(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Overlap(args) => cmd_overlap(args),
    };
    match result {
        Ok(warnings) if warnings > 0 => {
            diag(1, &format!("completed with {warnings} data-quality warnings"));
            ExitCode::from(2)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("tiktriage: error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn cmd_classify(args: ClassifyArgs) -> Result<u64, String> {
    if args.static_port_frac <= 0.0 || args.static_port_frac > 1.0 {
        return Err("--static-port-frac must be in (0, 1]".to_string());
    }
    if args.campaign_min_flows == 0 || args.volume_sigma <= 0.0 {
        return Err("campaign thresholds must be positive".to_string());
    }
    if args.bf_threshold == 0 {
        return Err("--bf-threshold must be >= 1".to_string());
    }
    for path in args
        .signatures
        .iter()
        .chain(args.captures.iter())
        .chain(args.logs.iter())
        .chain(args.attribution.iter())
    {
        if !path.exists() {
            return Err(format!("path does not exist: {}", path.display()));
        }
    }
    let cfg = RunConfig {
        captures: args.captures,
        logs: args.logs,
        signatures: args.signatures,
        attribution: args.attribution,
        out: args.out,
        idle_timeout_secs: args.idle_timeout,
        bf_window_secs: args.bf_window,
        bf_threshold: args.bf_threshold,
        campaign: CampaignParams {
            min_flows: args.campaign_min_flows,
            static_port_frac: args.static_port_frac,
            volume_sigma: args.volume_sigma,
        },
        bucket: args.bucket,
        workers: args.workers,
        lax: args.lax,
    };
    let art = report::run_classify(&cfg).map_err(|e| e.to_string())?;
    println!(
        "classified {} flows and {} log lines into {} events ({} campaigns); reports in {}",
        art.flows.len(),
        art.stats.log_lines,
        art.output.events.len(),
        art.campaigns.len(),
        cfg.out.display()
    );
    Ok(art.stats.warnings)
}

fn cmd_landscape(args: LandscapeArgs) -> Result<u64, String> {
    if args.top == 0 {
        return Err("--top must be >= 1".to_string());
    }
    let art = report::run_landscape(&args.scans, &args.filter, args.top, &args.out, args.lax)
        .map_err(|e| e.to_string())?;
    println!(
        "landscape: {} distinct records, {} distinct addresses; reports in {}",
        art.store.distinct_records(),
        art.store.distinct_ips(),
        args.out.display()
    );
    Ok(art.skipped)
}

fn cmd_generate(args: GenerateArgs) -> Result<u64, String> {
    let sensors: Vec<String> = if args.sensors.trim().is_empty() {
        DEFAULT_SENSORS.iter().map(|s| s.to_string()).collect()
    } else {
        args.sensors
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    };
    let mix: BTreeMap<String, f64> = if args.scenarios.is_empty() {
        ScenarioConfig::full_mix()
    } else {
        let mut mix = BTreeMap::new();
        for spec in &args.scenarios {
            let (name, weight) = spec
                .split_once('=')
                .ok_or_else(|| format!("--scenario expects name=weight, got `{spec}`"))?;
            if !SCENARIO_NAMES.contains(&name) {
                return Err(format!(
                    "unknown scenario `{name}`; valid scenarios: {}",
                    SCENARIO_NAMES.join(", ")
                ));
            }
            let weight: f64 = weight
                .parse()
                .map_err(|_| format!("bad weight in `{spec}`"))?;
            mix.insert(name.to_string(), weight);
        }
        mix
    };
    let config = ScenarioConfig {
        seed: args.seed,
        duration_days: args.days,
        sensors,
        mix,
        ..Default::default()
    };
    let manifest = generate_corpus(&config, &args.out).map_err(|e| e.to_string())?;
    for (path, checksum) in report::file_checksums(&args.out).map_err(|e| e.to_string())? {
        println!("{checksum:016x}  {path}");
    }
    println!(
        "manifest: {} ({} expected events, {} expected flows)",
        args.out.join("manifest.txt").display(),
        manifest.events.len(),
        manifest.expected_flows
    );
    Ok(0)
}

fn cmd_overlap(args: OverlapArgs) -> Result<u64, String> {
    let a = load_ip_list(&args.list_a).map_err(|e| e.to_string())?;
    let b = load_ip_list(&args.list_b).map_err(|e| e.to_string())?;
    let report = ip_overlap(&a, &b);
    println!("left: {}", report.left);
    println!("right: {}", report.right);
    println!("intersection: {}", report.intersection);
    println!("union: {}", report.union);
    println!("jaccard: {}", report.jaccard);
    println!("frac_of_left: {}", report.frac_of_left);
    println!("frac_of_right: {}", report.frac_of_right);
    Ok(0)
}
