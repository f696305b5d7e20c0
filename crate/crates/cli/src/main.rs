//! `watersense`: simulate, process and score water-level sensing runs.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use watersense::io::{
    ingest_udp, read_csi_file, read_detections, read_features, read_ground_truth, read_heights,
    write_csi_file, write_detections, write_features, write_ground_truth, write_heights,
    DetectionRecord, HeightRecord,
};
use watersense::keyvalue::KeyValues;
use watersense::pipeline::{
    simulation_truth, HeightTracker, Pipeline, PipelineConfig, PipelineReport,
};
use watersense::simulator::SimulationSpec;
use watersense::track::{align_and_score, HeightSeries};
use watersense::{CsiWindow, SystemConfig};

mod summary;

use summary::Summary;

#[derive(Parser)]
#[command(
    name = "watersense",
    version,
    about = "Water-level sensing from bi-static CSI"
)]
struct Cli {
    /// Key-value config file (system, scene and pipeline keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set snr_db=-10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed for every random draw of the simulator.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene into one CSI file per window plus truth.csv.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline over CSI files or a UDP stream.
    Process {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detection only: writes detections.csv and optionally heatmaps.
    Detect {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
        /// Also write one Doppler-range heatmap CSV per window.
        #[arg(long)]
        heatmaps: bool,
    },
    /// Re-track a feature log into heights.
    Track {
        #[arg(long)]
        features: PathBuf,
        /// Output heights CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate, process and score in one go.
    E2e {
        #[arg(long)]
        out: PathBuf,
    },
    /// Score heights against ground truth and summarize detections.
    Report {
        #[command(flatten)]
        scoring: Scoring,
        /// Write the summary as CSV here as well.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Input {
    /// CSI files or directories of `.csi` files, processed in sorted order.
    #[arg(long, num_args = 1.., conflicts_with = "udp", required_unless_present = "udp")]
    input: Vec<PathBuf>,
    /// Listen for session datagrams on this address instead.
    #[arg(long)]
    udp: Option<String>,
    /// Stop listening after this long without a datagram.
    #[arg(long, default_value_t = 5000)]
    idle_ms: u64,
}

#[derive(Args)]
struct Scoring {
    #[arg(long)]
    heights: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Estimate to score: `median` or an antenna index or `combined`.
    #[arg(long, default_value = "median")]
    stream: String,
}

/// Config file entries followed by `--set` and `--seed` overrides.
struct Settings {
    kv: KeyValues,
}

impl Settings {
    fn load(cli: &Cli) -> Result<Self> {
        let mut kv = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                KeyValues::parse(&text).with_context(|| format!("in {}", path.display()))?
            }
            None => KeyValues::default(),
        };
        let known: Vec<&str> = SimulationSpec::known_keys()
            .into_iter()
            .chain(PipelineConfig::known_keys().iter().copied())
            .collect();
        kv.reject_unknown(&known).context("config")?;
        for o in &cli.overrides {
            let Some((k, v)) = o.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {o:?}");
            };
            if !known.contains(&k.trim()) {
                bail!("--set: unknown key `{}`", k.trim());
            }
            kv.push(k.trim(), v.trim());
        }
        if let Some(seed) = cli.seed {
            kv.push("seed", &seed.to_string());
        }
        Ok(Self { kv })
    }

    fn system(&self) -> Result<SystemConfig> {
        SystemConfig::from_key_values(&self.kv).context("system config")
    }

    fn spec(&self) -> Result<SimulationSpec> {
        SimulationSpec::from_key_values(&self.kv).context("scene config")
    }

    fn pipeline(&self) -> Result<PipelineConfig> {
        PipelineConfig::default()
            .apply(&self.kv)
            .context("pipeline config")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn window_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("window_{index:05}.csi"))
}

/// Expands directories to their `.csi` files, each sorted by name.
fn csi_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csi"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Feeds windows from files or UDP through `pipeline` in arrival order.
fn run_input(pipeline: &mut Pipeline, input: &Input) -> Result<PipelineReport> {
    match &input.udp {
        None => {
            let paths = csi_paths(&input.input)?;
            log::info!("processing {} CSI files", paths.len());
            Ok(pipeline.run(paths.iter().enumerate().map(|(i, p)| (i, read_csi_file(p)))))
        }
        Some(addr) => {
            let socket = UdpSocket::bind(addr).with_context(|| format!("binding {addr}"))?;
            log::info!("listening on {}", socket.local_addr()?);
            let idle = Duration::from_millis(input.idle_ms);
            let (tx, rx) = mpsc::channel::<(usize, watersense::Result<CsiWindow>)>();
            let receiver = std::thread::spawn(move || {
                ingest_udp(&socket, idle, |id, w| {
                    // The pipeline outlives the receiver, so sends cannot fail.
                    let _ = tx.send((id as usize, Ok(w)));
                })
            });
            let report = pipeline.run(rx);
            let dropped = receiver.join().expect("receiver thread panicked")?;
            if dropped > 0 {
                log::warn!("dropped {dropped} malformed or late datagrams");
            }
            Ok(report)
        }
    }
}

fn write_report(dir: &Path, report: &PipelineReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_detections(create(&dir.join("detections.csv"))?, &report.detections)?;
    write_features(create(&dir.join("features.csv"))?, &report.features)?;
    write_heights(create(&dir.join("heights.csv"))?, &report.heights)?;
    for (idx, msg) in &report.failures {
        log::warn!("window {idx} skipped: {msg}");
    }
    Ok(())
}

fn estimate_series(heights: &[HeightRecord], stream: &str) -> Result<HeightSeries> {
    let report = PipelineReport {
        heights: heights.to_vec(),
        ..PipelineReport::default()
    };
    let series = match stream {
        "median" => report.median_level_series(),
        "combined" => report.level_series(None),
        n => {
            let idx: usize = n.parse().with_context(|| {
                format!("--stream expects median, combined or an antenna index, got {n:?}")
            })?;
            report.level_series(Some(idx))
        }
    };
    series.with_context(|| format!("building the {stream} series"))
}

fn summarize(
    heights: &[HeightRecord],
    truth: &HeightSeries,
    detections: Option<&[DetectionRecord]>,
    stream: &str,
) -> Result<Summary> {
    let est = estimate_series(heights, stream)?;
    let score = align_and_score(&est, truth).context("scoring against truth")?;
    Ok(Summary::new(stream, &score, detections, truth))
}

fn emit(summary: &Summary, csv: Option<&Path>) -> Result<()> {
    print!("{}", summary.text());
    if let Some(path) = csv {
        summary.write_csv(create(path)?)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let settings = Settings::load(&cli)?;
    match &cli.command {
        Command::Simulate { out } => {
            let spec = settings.spec()?;
            fs::create_dir_all(out)?;
            for i in 0..spec.num_windows {
                let w = spec
                    .simulate_window(i)
                    .with_context(|| format!("simulating window {i}"))?;
                write_csi_file(&w, window_file(out, i))?;
            }
            write_ground_truth(create(&out.join("truth.csv"))?, &simulation_truth(&spec)?)?;
            log::info!("wrote {} windows to {}", spec.num_windows, out.display());
        }
        Command::Process { input, out } => {
            let mut pipeline = Pipeline::new(settings.system()?, settings.pipeline()?)?;
            let report = run_input(&mut pipeline, input)?;
            write_report(out, &report)?;
            log::info!(
                "{} windows, {} detected, {} skipped",
                report.detections.len(),
                report.detections.iter().filter(|d| d.detected).count(),
                report.failures.len()
            );
        }
        Command::Detect {
            input,
            out,
            heatmaps,
        } => {
            if input.udp.is_some() {
                bail!("detect reads files only; use process for UDP input");
            }
            let mut pipeline = Pipeline::new(settings.system()?, settings.pipeline()?)?;
            fs::create_dir_all(out)?;
            let mut detections = Vec::new();
            for (i, path) in csi_paths(&input.input)?.iter().enumerate() {
                let a = match read_csi_file(path).and_then(|w| pipeline.analyze(i, &w)) {
                    Ok(a) => a,
                    Err(e) => {
                        log::warn!("window {i} ({}) skipped: {e}", path.display());
                        continue;
                    }
                };
                if *heatmaps {
                    a.heatmap
                        .write_csv(create(&out.join(format!("heatmap_{i:05}.csv")))?)?;
                }
                detections.push(pipeline.finish(&a)?.detection);
            }
            write_detections(create(&out.join("detections.csv"))?, &detections)?;
        }
        Command::Track { features, out } => {
            let system = settings.system()?;
            let cfg = settings.pipeline()?;
            let theta = cfg
                .reflection_angle_deg
                .map_or_else(|| system.geometry.reflection_angle(), f64::to_radians);
            let samples = read_features(open(features)?)
                .with_context(|| format!("in {}", features.display()))?;
            let mut tracker = HeightTracker::new(cfg.kalman, system.wavelength(), theta)?;
            write_heights(create(out)?, &tracker.track_all(&samples)?)?;
        }
        Command::E2e { out } => {
            let spec = settings.spec()?;
            let mut pipeline = Pipeline::new(spec.system.clone(), settings.pipeline()?)?;
            let report = pipeline.run((0..spec.num_windows).map(|i| (i, spec.simulate_window(i))));
            write_report(out, &report)?;
            let truth = simulation_truth(&spec)?;
            write_ground_truth(create(&out.join("truth.csv"))?, &truth)?;
            let stream = match report.streams().as_slice() {
                [None] => "combined",
                _ => "median",
            };
            let summary = summarize(&report.heights, &truth, Some(&report.detections), stream)?;
            fs::write(out.join("summary.txt"), summary.text())?;
            emit(&summary, Some(&out.join("summary.csv")))?;
        }
        Command::Report { scoring, csv } => {
            let heights = read_heights(open(&scoring.heights)?)
                .with_context(|| format!("in {}", scoring.heights.display()))?;
            let truth = read_ground_truth(open(&scoring.truth)?)
                .with_context(|| format!("in {}", scoring.truth.display()))?;
            let detections = match &scoring.detections {
                Some(p) => {
                    Some(read_detections(open(p)?).with_context(|| format!("in {}", p.display()))?)
                }
                None => None,
            };
            let summary = summarize(&heights, &truth, detections.as_deref(), &scoring.stream)?;
            emit(&summary, csv.as_deref())?;
        }
    }
    std::io::stdout().flush()?;
    Ok(())
}
