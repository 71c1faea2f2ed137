//! The `resochain` command-line driver.
//!
//! Every run reads one TOML config file. Flags only choose the output
//! directory, verbosity and thread count. A config looks like
//!
//! ```toml
//! [library]
//! preset = "standard"          # or: path = "lib.json"  (JSON or TOML)
//!                              # or: blocks = [...] and probabilities = [...]
//!
//! [scan]
//! lambda_min = 0.0             # default 0
//! lambda_max = 4.0             # default: Gershgorin bound of the library
//! grid = 1000
//! tol = 1e-10
//!
//! [spectrum]
//! blocks = 1000                # M, blocks per sample
//! seeds = [1, 2, 3]
//! inclusion_tol = 1e-8
//! edge_grid = 0                # > 0: also search both ends for edge modes
//!
//! [edge]
//! sequence = { blocks = 400, seed = 1 }   # or { indices = [...] } or { depth = 6 }
//! gaps = [[1.0, 2.0]]          # default: every certified gap of the scan
//! grid = 200
//! truncation_blocks = 400
//! sides = ["left"]
//!
//! [sample]
//! sequence = { blocks = 100, seed = 7 }
//! ```
//!
//! Outputs are written to `--out` (default `.`). Each CSV starts with a
//! `# resochain <version> config_sha256=<hex>` line, and each JSON document
//! carries the same data in a `meta` field.
//!
//! Exit codes: 0 on success, 2 for bad configs or inputs, 1 for numerical
//! failures.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blocks::{
    pseudo_ergodic_word, sample_iid, transition_matrix, BlockLibrary, BlockSequence,
};
use crate::classify::{
    scan_with_tol, spectral_upper_bound, BandReport, Verdict, DEFAULT_GRID, EDGE_TOL,
};
use crate::edge::{
    edge_chain, find_edge_modes_on, finite_chain_edge_modes, EdgeMode, Side,
    DEFAULT_TRUNCATION_BLOCKS,
};
use crate::error::{Error, Result};
use crate::finite::{finite_spectrum, inclusion_check, library_id, InclusionReport, INCLUSION_TOL};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "resochain",
    version,
    about = "Spectra and edge modes of block-disordered resonator chains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify a frequency range; writes bands.csv and bands.json.
    Scan { config: PathBuf },
    /// Finite spectra of sampled chains; writes spectrum.csv and spectrum.json.
    Spectrum { config: PathBuf },
    /// Edge modes in certified gaps; writes edge_modes.json and eigenvector CSVs.
    Edge { config: PathBuf },
    /// Draw a block sequence; writes sample.json and sequence.csv.
    Sample { config: PathBuf },
}

impl Command {
    fn config(&self) -> &Path {
        match self {
            Command::Scan { config }
            | Command::Spectrum { config }
            | Command::Edge { config }
            | Command::Sample { config } => config,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetLibrary {
    pub preset: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileLibrary {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LibrarySpec {
    Preset(PresetLibrary),
    File(FileLibrary),
    Inline(BlockLibrary),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SequenceSpec {
    Iid { blocks: usize, seed: u64 },
    PseudoErgodic { depth: usize },
    Explicit { indices: Vec<usize> },
}

impl SequenceSpec {
    pub fn build(&self, library: &BlockLibrary) -> Result<BlockSequence> {
        let seq = match self {
            SequenceSpec::Iid { blocks, seed } => sample_iid(library, *blocks, *seed),
            SequenceSpec::PseudoErgodic { depth } => pseudo_ergodic_word(library.size(), *depth)?,
            SequenceSpec::Explicit { indices } => BlockSequence::explicit(indices.clone()),
        };
        seq.validate(library)?;
        Ok(seq)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub lambda_min: f64,
    pub lambda_max: Option<f64>,
    pub grid: usize,
    pub tol: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            lambda_min: 0.0,
            lambda_max: None,
            grid: DEFAULT_GRID,
            tol: EDGE_TOL,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub blocks: usize,
    pub seeds: Vec<u64>,
    pub inclusion_tol: f64,
    pub edge_grid: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            blocks: 1000,
            seeds: vec![1],
            inclusion_tol: INCLUSION_TOL,
            edge_grid: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeConfig {
    pub sequence: SequenceSpec,
    pub gaps: Option<Vec<(f64, f64)>>,
    pub grid: usize,
    pub truncation_blocks: usize,
    pub sides: Vec<Side>,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            sequence: SequenceSpec::Iid {
                blocks: 400,
                seed: 1,
            },
            gaps: None,
            grid: 200,
            truncation_blocks: DEFAULT_TRUNCATION_BLOCKS,
            sides: vec![Side::Left],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub sequence: SequenceSpec,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            sequence: SequenceSpec::Iid {
                blocks: 100,
                seed: 1,
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub library: LibrarySpec,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub edge: EdgeConfig,
    #[serde(default)]
    pub sample: SampleConfig,
}

/// A parsed config together with what is needed to resolve and label it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub library: BlockLibrary,
    pub sha256: String,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let config: RunConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let library = resolve_library(&config.library, base)?;
    Ok(LoadedConfig {
        config,
        library,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn resolve_library(spec: &LibrarySpec, base: &Path) -> Result<BlockLibrary> {
    match spec {
        LibrarySpec::Preset(p) if p.preset == "standard" => Ok(BlockLibrary::standard()),
        LibrarySpec::Preset(p) => Err(Error::Config(format!(
            "unknown library preset {:?}",
            p.preset
        ))),
        LibrarySpec::Inline(lib) => Ok(lib.clone()),
        LibrarySpec::File(f) => {
            let path = base.join(&f.path);
            let text = fs::read_to_string(&path).map_err(|e| {
                Error::Config(format!("cannot read library {}: {e}", path.display()))
            })?;
            let parsed = if path.extension().is_some_and(|e| e == "toml") {
                toml::from_str(&text).map_err(|e| e.to_string())
            } else {
                serde_json::from_str(&text).map_err(|e| e.to_string())
            };
            parsed.map_err(|e| Error::Config(format!("library {}: {e}", path.display())))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub library_id: String,
}

impl Meta {
    fn new(loaded: &LoadedConfig) -> Self {
        Self {
            tool: "resochain",
            version: VERSION,
            config_sha256: loaded.sha256.clone(),
            library_id: library_id(&loaded.library),
        }
    }

    fn csv_header(&self) -> String {
        format!(
            "# resochain {} config_sha256={}\n",
            self.version, self.config_sha256
        )
    }
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Validation(_)
        | Error::UnsupportedSize { .. }
        | Error::Precondition(_)
        | Error::Domain(_) => 2,
        Error::NotHyperbolic { .. }
        | Error::IllConditioned(_)
        | Error::Numerical(_)
        | Error::Io(_) => 1,
    }
}

/// Shortest round-trip form, with an exponent for very small or large values.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn write_csv<F>(path: &Path, meta: &Meta, header: &[&str], fill: F) -> Result<()>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = meta.csv_header().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)
            .and_then(|_| fill(&mut w))
            .and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    fs::write(path, buf)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Io(e.into()))?;
    f.write_all(b"\n")?;
    Ok(())
}

fn run_scan(loaded: &LoadedConfig) -> Result<BandReport> {
    let c = &loaded.config.scan;
    let hi = c
        .lambda_max
        .unwrap_or_else(|| spectral_upper_bound(&loaded.library));
    scan_with_tol(&loaded.library, c.lambda_min, hi, c.grid, c.tol)
}

pub fn cmd_scan(loaded: &LoadedConfig, out: &Path) -> Result<()> {
    let report = run_scan(loaded)?;
    let meta = Meta::new(loaded);
    write_csv(
        &out.join("bands.csv"),
        &meta,
        &["lambda_lo", "lambda_hi", "verdict", "non_hyperbolic"],
        |w| {
            for iv in &report.intervals {
                let nh: Vec<String> = iv.non_hyperbolic.iter().map(|d| d.to_string()).collect();
                w.write_record([
                    num(iv.lo),
                    num(iv.hi),
                    iv.verdict.as_str().to_string(),
                    nh.join(";"),
                ])?;
            }
            Ok(())
        },
    )?;
    #[derive(Serialize)]
    struct Doc<'a> {
        meta: &'a Meta,
        report: &'a BandReport,
    }
    write_json(
        &out.join("bands.json"),
        &Doc {
            meta: &meta,
            report: &report,
        },
    )?;
    log::info!("scan: {} intervals", report.intervals.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct SpectrumRun {
    seed: u64,
    blocks: usize,
    resonators: usize,
    flagged: usize,
    edge_modes: Vec<f64>,
}

pub fn cmd_spectrum(loaded: &LoadedConfig, out: &Path) -> Result<()> {
    let c = &loaded.config.spectrum;
    let lib = &loaded.library;
    let meta = Meta::new(loaded);
    let mut seeds = c.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();

    let mut rows: Vec<(u64, InclusionReport)> = Vec::new();
    let mut runs = Vec::new();
    let report = if c.blocks > 0 {
        Some(run_scan(loaded)?)
    } else {
        None
    };
    if let Some(report) = &report {
        let gaps = report.merged(Verdict::CertifiedGap);
        for &seed in &seeds {
            let seq = sample_iid(lib, c.blocks, seed);
            let result = finite_spectrum(lib, &seq)?;
            let mut modes = Vec::new();
            if c.edge_grid > 0 {
                for &gap in &gaps {
                    modes.extend(finite_chain_edge_modes(lib, &seq, gap, c.edge_grid)?);
                }
            }
            let inc = inclusion_check(&result, report, &modes, c.inclusion_tol)?;
            runs.push(SpectrumRun {
                seed,
                blocks: c.blocks,
                resonators: result.resonators,
                flagged: inc.flagged,
                edge_modes: modes.iter().map(|m| m.lambda).collect(),
            });
            if inc.flagged > 0 {
                log::warn!(
                    "seed {seed}: {} eigenvalues outside the certified spectrum",
                    inc.flagged
                );
            }
            rows.push((seed, inc));
        }
    }

    write_csv(
        &out.join("spectrum.csv"),
        &meta,
        &["seed", "M", "index", "lambda", "distance_to_sigma", "flag"],
        |w| {
            for (seed, inc) in &rows {
                for e in &inc.entries {
                    w.write_record([
                        seed.to_string(),
                        c.blocks.to_string(),
                        e.index.to_string(),
                        num(e.lambda),
                        num(e.distance),
                        e.flag.to_string(),
                    ])?;
                }
            }
            Ok(())
        },
    )?;
    #[derive(Serialize)]
    struct Doc<'a> {
        meta: &'a Meta,
        inclusion_tol: f64,
        flag_bias: &'static str,
        runs: &'a [SpectrumRun],
    }
    write_json(
        &out.join("spectrum.json"),
        &Doc {
            meta: &meta,
            inclusion_tol: c.inclusion_tol,
            flag_bias: crate::finite::FLAG_BIAS,
            runs: &runs,
        },
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EdgeEntry<'a> {
    #[serde(flatten)]
    mode: &'a EdgeMode,
    gap: (f64, f64),
    eigenvector_file: String,
}

pub fn cmd_edge(loaded: &LoadedConfig, out: &Path) -> Result<()> {
    let c = &loaded.config.edge;
    let lib = &loaded.library;
    let seq = c.sequence.build(lib)?;
    let gaps = match &c.gaps {
        Some(g) => g.clone(),
        None => run_scan(loaded)?.merged(Verdict::CertifiedGap),
    };
    let mut found: Vec<((f64, f64), EdgeMode)> = Vec::new();
    for &side in &c.sides {
        let chain = edge_chain(lib, &seq, side)?;
        for &gap in &gaps {
            let modes = find_edge_modes_on(lib, &chain, side, gap, c.grid, c.truncation_blocks)?;
            found.extend(modes.into_iter().map(|m| (gap, m)));
        }
    }
    found.sort_by(|a, b| a.1.lambda.total_cmp(&b.1.lambda));

    let meta = Meta::new(loaded);
    let mut entries = Vec::new();
    for (k, (gap, mode)) in found.iter().enumerate() {
        let name = format!("edge_mode_{k}.csv");
        write_csv(&out.join(&name), &meta, &["index", "v"], |w| {
            for (i, v) in mode.eigenvector.iter().enumerate() {
                w.write_record([i.to_string(), num(*v)])?;
            }
            Ok(())
        })?;
        entries.push(EdgeEntry {
            mode,
            gap: *gap,
            eigenvector_file: name,
        });
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        meta: &'a Meta,
        sequence: &'a BlockSequence,
        gaps: &'a [(f64, f64)],
        modes: Vec<EdgeEntry<'a>>,
    }
    write_json(
        &out.join("edge_modes.json"),
        &Doc {
            meta: &meta,
            sequence: &seq,
            gaps: &gaps,
            modes: entries,
        },
    )?;
    log::info!("edge: {} modes", found.len());
    Ok(())
}

pub fn cmd_sample(loaded: &LoadedConfig, out: &Path) -> Result<()> {
    let lib = &loaded.library;
    let seq = loaded.config.sample.sequence.build(lib)?;
    let meta = Meta::new(loaded);
    write_csv(
        &out.join("sequence.csv"),
        &meta,
        &["position", "block"],
        |w| {
            for (i, d) in seq.indices.iter().enumerate() {
                w.write_record([i.to_string(), d.to_string()])?;
            }
            Ok(())
        },
    )?;
    let counts: Vec<usize> = (0..lib.size())
        .map(|d| seq.indices.iter().filter(|&&x| x == d).count())
        .collect();
    #[derive(Serialize)]
    struct Doc<'a> {
        meta: &'a Meta,
        library: &'a BlockLibrary,
        sequence: &'a BlockSequence,
        block_counts: Vec<usize>,
        transition_matrix: crate::blocks::TransitionMatrix,
    }
    write_json(
        &out.join("sample.json"),
        &Doc {
            meta: &meta,
            library: lib,
            sequence: &seq,
            block_counts: counts,
            transition_matrix: transition_matrix(lib),
        },
    )
}

/// Run a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, e.g. when called twice in one process.
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            log::debug!("global thread pool already initialised");
        }
    }
    let loaded = load_config(cli.command.config())?;
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Scan { .. } => cmd_scan(&loaded, &cli.out),
        Command::Spectrum { .. } => cmd_spectrum(&loaded, &cli.out),
        Command::Edge { .. } => cmd_edge(&loaded, &cli.out),
        Command::Sample { .. } => cmd_sample(&loaded, &cli.out),
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
