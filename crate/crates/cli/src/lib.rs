//! `imgsel`: batch access to hashing, comparison, selection, calibration,
//! effect analysis and the HTTP service.
//!
//! Exit codes: 0 success, 1 domain error (bad input file, failed analysis),
//! 2 usage error.

pub mod manifest;
pub mod record;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use imgsel_core::calibration::{
    generate_benchmark, operating_point, parse_thresholds, read_pairs, sweep, BenchMethod,
    CalibrationReport, DescriptorStore, Label,
};
use imgsel_core::causal::{
    analyze, generate_panel, wearout_scan, CausalEstimate, Lift, MetricSeries, PanelSpec,
    SeriesTable, R_SQUARED_WARNING,
};
use imgsel_core::comparator::{compare_single, ComparatorReport, ComponentVerdict};
use imgsel_core::descriptor::{compute_descriptor_with, ImageDescriptor};
use imgsel_core::selection::{run_pipeline, SelectionResult};
use imgsel_core::synth::catalog_corpus;
use imgsel_core::typing::{train_centroid_classifier, ProfileFile};
use imgsel_core::{compare, Method, RasterImage};
use imgsel_service::ServiceConfig;
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::Manifest;

/// Used by randomized subcommands when `--seed` is absent; always echoed.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(
    name = "imgsel",
    version,
    about = "Select, de-duplicate and order catalog item images"
)]
pub struct Cli {
    /// TOML configuration shared with the service (profiles, models,
    /// comparator and quality settings). Falls back to IMGSEL_CONFIG.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// `record` prints one versioned JSON object per line.
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    pub format: Format,
    /// Seed for randomized subcommands (benchgen, causal).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Record,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the descriptor of each image.
    Hash {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Compare two images with the ensemble, or with one method.
    Compare {
        left: PathBuf,
        right: PathBuf,
        /// ahash, phash, dhash, whash, histogram or raw_cosine.
        #[arg(long)]
        method: Option<Method>,
        /// Duplicate threshold for --method; defaults to its operating point.
        #[arg(long, requires = "method")]
        threshold: Option<f64>,
    },
    /// Remove duplicates and failed images, keeping aggregation order.
    Dedup { manifest: PathBuf },
    /// Run the full pipeline: dedupe, then order by image type.
    Select { manifest: PathBuf },
    /// Sweep thresholds over a labeled pair file (pairs.jsonl).
    Calibrate {
        pairs: PathBuf,
        /// A single method or `ensemble` (sweeps the histogram threshold).
        #[arg(long, default_value = "ensemble")]
        method: String,
        /// `a..b`, `a..b:step` or a comma list; defaults to the method's grid.
        #[arg(long)]
        thresholds: Option<String>,
    },
    /// Generate a synthetic labeled pair benchmark.
    Benchgen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 400)]
        pairs: usize,
        #[arg(long, default_value_t = 10)]
        families: usize,
        #[arg(long, default_value_t = 4)]
        colorways: usize,
    },
    /// Estimate the effect of an intervention with a synthetic control.
    Causal(CausalArgs),
    /// Fit an image-type model from `<dir>/<label>/<image>` examples.
    Train {
        #[arg(long)]
        category: String,
        #[arg(long, value_name = "DIR")]
        examples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Start the HTTP service.
    Serve,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["series", "simulate"]))]
pub struct CausalArgs {
    /// CSV with a date column followed by one column per series.
    #[arg(long, value_name = "CSV", requires_all = ["treated", "intervention"])]
    pub series: Option<PathBuf>,
    /// Column holding the treated series.
    #[arg(long)]
    pub treated: Option<String>,
    /// First post-period date, or a 0-based row index.
    #[arg(long)]
    pub intervention: Option<String>,
    /// Analyze a generated panel instead of a file.
    #[arg(long)]
    pub simulate: bool,
    /// Lift injected by --simulate: `none`, `0.2`, or `decay:<initial>:<weekly factor>`.
    #[arg(long, default_value = "none", requires = "simulate")]
    pub lift: String,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    /// Cumulative post-period windows in weeks, e.g. `1,2,4`.
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<usize>,
    /// Write actual, counterfactual and difference per post-period day.
    #[arg(long, value_name = "CSV")]
    pub plot: Option<PathBuf>,
}

/// Parses `argv`, runs the subcommand and returns the exit code. Results go
/// to `out`; diagnostics and usage text go to `err`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let mut text = e.render().to_string();
            return if e.use_stderr() {
                // value errors come without the usage line
                if !text.contains("Usage:") {
                    text = format!("{text}\n{}\n", Cli::command().render_usage());
                }
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = ServiceConfig::resolve(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let text = match &cli.command {
        Command::Hash { images } => hash(images, &cfg, cli.format)?,
        Command::Compare {
            left,
            right,
            method,
            threshold,
        } => compare_cmd(left, right, *method, *threshold, &cfg, cli.format)?,
        Command::Dedup { manifest } => select(manifest, &cfg, false, cli.format)?,
        Command::Select { manifest } => select(manifest, &cfg, true, cli.format)?,
        Command::Calibrate {
            pairs,
            method,
            thresholds,
        } => calibrate(pairs, method, thresholds.as_deref(), &cfg, cli.format)?,
        Command::Benchgen {
            out,
            pairs,
            families,
            colorways,
        } => benchgen(out, *pairs, *families, *colorways, seed, cli.format)?,
        Command::Causal(args) => causal(args, seed, cli.format)?,
        Command::Train {
            category,
            examples,
            out,
        } => train(category, examples, out, &cfg, cli.format)?,
        Command::Serve => return serve(&cfg),
    };
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn open_image(path: &Path) -> Result<RasterImage> {
    if !path.exists() {
        bail!("no such file: {}", path.display());
    }
    RasterImage::open(path).with_context(|| format!("cannot decode {}", path.display()))
}

fn descriptor(path: &Path, cfg: &ServiceConfig) -> Result<ImageDescriptor> {
    Ok(compute_descriptor_with(
        &open_image(path)?,
        cfg.comparator.descriptor_options(),
    ))
}

#[derive(Serialize)]
struct HashRecord<'a> {
    path: String,
    descriptor: &'a ImageDescriptor,
}

fn hash(images: &[PathBuf], cfg: &ServiceConfig, format: Format) -> Result<String> {
    let descriptors = images
        .par_iter()
        .map(|p| descriptor(p, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut s = String::new();
    for (path, d) in images.iter().zip(&descriptors) {
        match format {
            Format::Record => {
                let rec = HashRecord {
                    path: path.display().to_string(),
                    descriptor: d,
                };
                writeln!(s, "{}", record::to_line("descriptor", &rec))?;
            }
            Format::Human => {
                let occupied = d.histogram.bins().iter().filter(|&&v| v > 0.0).count();
                writeln!(s, "{}  {}x{}", path.display(), d.width, d.height)?;
                writeln!(
                    s,
                    "  ahash {}  phash {}  dhash {}  whash {}",
                    d.ahash.to_hex(),
                    d.phash.to_hex(),
                    d.dhash.to_hex(),
                    d.whash.to_hex()
                )?;
                writeln!(
                    s,
                    "  histogram: {occupied} of {} bins occupied",
                    d.histogram.bins().len()
                )?;
            }
        }
    }
    Ok(s)
}

#[derive(Serialize)]
struct CompareRecord<'a, T: Serialize> {
    left: String,
    right: String,
    #[serde(flatten)]
    verdict: &'a T,
}

fn compare_cmd(
    left: &Path,
    right: &Path,
    method: Option<Method>,
    threshold: Option<f64>,
    cfg: &ServiceConfig,
    format: Format,
) -> Result<String> {
    let (a, b) = (descriptor(left, cfg)?, descriptor(right, cfg)?);
    let (l, r) = (left.display().to_string(), right.display().to_string());
    let mut s = String::new();
    match method {
        None => {
            let report: ComparatorReport = compare(&a, &b, &cfg.comparator);
            match format {
                Format::Record => {
                    let rec = CompareRecord {
                        left: l,
                        right: r,
                        verdict: &report,
                    };
                    writeln!(s, "{}", record::to_line("comparison", &rec))?;
                }
                Format::Human => {
                    writeln!(s, "{l} vs {r}")?;
                    for c in &report.components {
                        write_verdict(&mut s, c)?;
                    }
                    writeln!(
                        s,
                        "final: {}",
                        if report.is_duplicate() {
                            "duplicate"
                        } else {
                            "different"
                        }
                    )?;
                }
            }
        }
        Some(m) => {
            let threshold = threshold.unwrap_or_else(|| operating_point(m));
            let verdict = compare_single(&a, &b, m, threshold)?;
            match format {
                Format::Record => {
                    let rec = CompareRecord {
                        left: l,
                        right: r,
                        verdict: &verdict,
                    };
                    writeln!(s, "{}", record::to_line("component", &rec))?;
                }
                Format::Human => {
                    writeln!(s, "{l} vs {r}")?;
                    write_verdict(&mut s, &verdict)?;
                }
            }
        }
    }
    Ok(s)
}

fn write_verdict(s: &mut String, c: &ComponentVerdict) -> std::fmt::Result {
    writeln!(
        s,
        "  {:<10} distance {:>10.4}  threshold {:>8.4}  {}",
        c.name.as_str(),
        c.distance,
        c.threshold,
        if c.is_duplicate {
            "duplicate"
        } else {
            "different"
        }
    )
}

fn select(manifest: &Path, cfg: &ServiceConfig, reorder: bool, format: Format) -> Result<String> {
    let mut deps = cfg.pipeline_deps()?;
    deps.options.reorder = reorder;
    let (manifest, base) = Manifest::load(manifest)?;
    let results = manifest
        .items
        .par_iter()
        .map(|item| Ok(run_pipeline(&item.load(&base)?, &deps)))
        .collect::<Result<Vec<SelectionResult>>>()?;
    let mut s = String::new();
    for r in &results {
        match format {
            Format::Record => writeln!(s, "{}", record::to_line("selection", r))?,
            Format::Human => {
                s.push_str(&r.render_table());
                s.push('\n');
            }
        }
    }
    Ok(s)
}

#[derive(Serialize)]
struct CalibrationRecord<'a> {
    pairs: String,
    #[serde(flatten)]
    report: &'a CalibrationReport,
}

fn calibrate(
    pairs_path: &Path,
    method: &str,
    thresholds: Option<&str>,
    cfg: &ServiceConfig,
    format: Format,
) -> Result<String> {
    let method = if method == "ensemble" {
        BenchMethod::ensemble(&cfg.comparator)
    } else {
        method.parse::<BenchMethod>()?
    };
    let thresholds = match thresholds {
        Some(spec) => parse_thresholds(spec).map_err(|e| anyhow!("--thresholds: {e}"))?,
        None => method.default_thresholds(),
    };
    let pairs = read_pairs(pairs_path)?;
    if pairs.is_empty() {
        bail!("{}: no pairs", pairs_path.display());
    }
    let root = pairs_path.parent().unwrap_or(Path::new(""));
    let (store, missing) =
        DescriptorStore::load_refs(root, &pairs, cfg.comparator.descriptor_options());
    if let Some(first) = missing.first() {
        bail!(
            "cannot load {} ({} unreadable image(s) referenced by {})",
            root.join(first).display(),
            missing.len(),
            pairs_path.display()
        );
    }
    let report = sweep(&pairs, &store, method, &thresholds)?;
    Ok(match format {
        Format::Record => {
            let rec = CalibrationRecord {
                pairs: pairs_path.display().to_string(),
                report: &report,
            };
            format!("{}\n", record::to_line("calibration", &rec))
        }
        Format::Human => report.render_table(),
    })
}

#[derive(Serialize)]
struct BenchmarkRecord {
    seed: u64,
    dir: String,
    pairs_file: String,
    pairs: usize,
    duplicates: usize,
    images: usize,
}

fn benchgen(
    dir: &Path,
    n_pairs: usize,
    families: usize,
    colorways: usize,
    seed: u64,
    format: Format,
) -> Result<String> {
    if families == 0 || colorways == 0 {
        bail!("--families and --colorways must be positive");
    }
    let seeds = catalog_corpus(families, colorways, seed);
    let bench = generate_benchmark(&seeds, n_pairs, seed)?;
    let pairs_file = bench.save(dir)?;
    let rec = BenchmarkRecord {
        seed,
        dir: dir.display().to_string(),
        pairs_file: pairs_file.display().to_string(),
        pairs: bench.pairs.len(),
        duplicates: bench
            .pairs
            .iter()
            .filter(|p| p.label == Label::Duplicate)
            .count(),
        images: bench.images.len(),
    };
    Ok(match format {
        Format::Record => format!("{}\n", record::to_line("benchmark", &rec)),
        Format::Human => format!(
            "wrote {} pairs ({} duplicate) over {} images to {}\nseed {}\n",
            rec.pairs, rec.duplicates, rec.images, rec.pairs_file, rec.seed
        ),
    })
}

pub fn parse_lift(spec: &str) -> Result<Lift> {
    let spec = spec.trim();
    if spec == "none" {
        return Ok(Lift::None);
    }
    if let Some(rest) = spec.strip_prefix("decay:") {
        let (a, b) = rest
            .split_once(':')
            .ok_or_else(|| anyhow!("--lift decay needs <initial>:<weekly factor>"))?;
        return Ok(Lift::Decaying {
            initial: a.trim().parse().context("--lift initial")?,
            weekly_factor: b.trim().parse().context("--lift weekly factor")?,
        });
    }
    let v: f64 = spec
        .strip_prefix("uniform:")
        .unwrap_or(spec)
        .parse()
        .with_context(|| format!("--lift {spec:?}"))?;
    Ok(Lift::Uniform(v))
}

#[derive(Serialize)]
struct EstimateSummary {
    window_weeks: usize,
    relative_effect: f64,
    prob_causal: f64,
    interval: [f64; 2],
}

impl From<&CausalEstimate> for EstimateSummary {
    fn from(e: &CausalEstimate) -> Self {
        Self {
            window_weeks: e.window_weeks,
            relative_effect: e.relative_effect,
            prob_causal: e.prob_causal,
            interval: e.interval,
        }
    }
}

#[derive(Serialize)]
struct CausalRecord {
    seed: u64,
    bootstrap: usize,
    treated: String,
    controls: Vec<String>,
    intercept: f64,
    weights: Vec<f64>,
    r_squared: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    estimate: EstimateSummary,
    wearout: Vec<EstimateSummary>,
}

fn causal(args: &CausalArgs, seed: u64, format: Format) -> Result<String> {
    let (treated, controls, post_dates): (MetricSeries, Vec<MetricSeries>, Vec<String>) =
        match &args.series {
            Some(path) => {
                let table = SeriesTable::read(path)?;
                let column = args.treated.as_deref().expect("clap requires --treated");
                let when = args
                    .intervention
                    .as_deref()
                    .expect("clap requires --intervention");
                let index = match table.index_of(when) {
                    Some(i) => i,
                    None => when.parse::<usize>().map_err(|_| {
                        anyhow!("{}: no date {when:?} and not a row index", path.display())
                    })?,
                };
                let (t, c) = table.split(column, index)?;
                (t, c, table.dates[index.min(table.dates.len())..].to_vec())
            }
            None => {
                let spec = PanelSpec {
                    lift: parse_lift(&args.lift)?,
                    ..Default::default()
                };
                let panel = generate_panel(&spec, seed)?;
                let days = (spec.intervention_index..spec.days)
                    .map(|d| format!("day{d}"))
                    .collect();
                (panel.treated, panel.controls, days)
            }
        };
    let (model, est) = analyze(&treated, &controls, args.bootstrap, seed)?;
    let scan = wearout_scan(
        &treated,
        &controls,
        &model,
        &args.windows,
        args.bootstrap,
        seed,
    )?;
    if let Some(plot) = &args.plot {
        write_plot(plot, &post_dates, &est.plot_rows(treated.post()))?;
    }
    let warning = (model.r_squared < R_SQUARED_WARNING).then(|| {
        format!(
            "pre-period R² {:.3} is below {R_SQUARED_WARNING}; the controls track the treated series poorly",
            model.r_squared
        )
    });
    let rec = CausalRecord {
        seed,
        bootstrap: args.bootstrap,
        treated: treated.name.clone(),
        controls: controls.iter().map(|c| c.name.clone()).collect(),
        intercept: model.intercept,
        weights: model.weights.clone(),
        r_squared: model.r_squared,
        warning,
        estimate: (&est).into(),
        wearout: scan.iter().map(|(_, e)| e.into()).collect(),
    };
    if format == Format::Record {
        return Ok(format!("{}\n", record::to_line("causal", &rec)));
    }
    let mut s = String::new();
    writeln!(
        s,
        "{}: {} control(s), pre-period R² {:.3}",
        rec.treated,
        rec.controls.len(),
        rec.r_squared
    )?;
    if let Some(w) = &rec.warning {
        writeln!(s, "warning: {w}")?;
    }
    let row = |s: &mut String, label: String, e: &EstimateSummary| {
        writeln!(
            s,
            "{label:<12} effect {:>+8.2}%  95% interval [{:+.2}%, {:+.2}%]  prob causal {:>5.1}%",
            e.relative_effect, e.interval[0], e.interval[1], e.prob_causal
        )
    };
    row(&mut s, "post period".into(), &rec.estimate)?;
    for e in &rec.wearout {
        row(&mut s, format!("{} week(s)", e.window_weeks), e)?;
    }
    writeln!(s, "seed {seed}, {} bootstrap replicates", rec.bootstrap)?;
    Ok(s)
}

fn write_plot(path: &Path, dates: &[String], rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["date", "actual", "counterfactual", "difference"])?;
    for (date, (a, c, d)) in dates.iter().zip(rows) {
        w.write_record([date.clone(), a.to_string(), c.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ModelRecord {
    path: String,
    category: String,
    classes: Vec<String>,
    training_count: Vec<usize>,
}

fn train(
    category: &str,
    examples: &Path,
    out: &Path,
    cfg: &ServiceConfig,
    format: Format,
) -> Result<String> {
    let profiles_path = cfg
        .profiles
        .as_deref()
        .ok_or_else(|| anyhow!("train needs a profiles file; set `profiles` in --config"))?;
    let profiles = ProfileFile::load(profiles_path)?;
    let profile = profiles
        .profiles
        .iter()
        .find(|p| p.category_id == category)
        .ok_or_else(|| {
            anyhow!(
                "{}: no profile for category {category:?}",
                profiles_path.display()
            )
        })?;
    let mut labeled = Vec::new();
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(examples)
        .with_context(|| format!("cannot read {}", examples.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    dirs.sort();
    for dir in dirs.into_iter().filter(|d| d.is_dir()) {
        let label = dir
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.sort();
        for f in files.into_iter().filter(|f| f.is_file()) {
            labeled.push((f, label.clone()));
        }
    }
    let images = labeled
        .par_iter()
        .map(|(f, label)| Ok((open_image(f)?, label.clone())))
        .collect::<Result<Vec<_>>>()?;
    let model = train_centroid_classifier(&images, profile)?;
    std::fs::write(out, model.to_json())
        .with_context(|| format!("cannot write {}", out.display()))?;
    let rec = ModelRecord {
        path: out.display().to_string(),
        category: model.category_id.clone(),
        classes: model.classes.clone(),
        training_count: model.training_count.clone(),
    };
    Ok(match format {
        Format::Record => format!("{}\n", record::to_line("model", &rec)),
        Format::Human => {
            let counts: Vec<String> = rec
                .classes
                .iter()
                .zip(&rec.training_count)
                .map(|(c, n)| format!("{c} {n}"))
                .collect();
            format!(
                "wrote {} for {} ({})\n",
                rec.path,
                rec.category,
                counts.join(", ")
            )
        }
    })
}

fn serve(cfg: &ServiceConfig) -> Result<()> {
    let rt = tokio::runtime::Runtime::new().context("cannot start the async runtime")?;
    rt.block_on(imgsel_service::run(cfg))?;
    Ok(())
}
