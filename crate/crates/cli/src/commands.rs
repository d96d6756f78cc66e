//! Subcommands: argument definitions and their implementations.

use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use avocc_core::agent::{run_experiment, Strategy, TrialTrace};
use avocc_core::geometry::{OrientedRect, Vec2};
use avocc_core::metrics::{elbow_curve, elbow_knee};
use avocc_core::resolver::{find_occlusion_free, ResolutionConstraints, ResolutionQuery, ResolutionStatus};
use avocc_core::rng::{derive_seed, Stream};
use avocc_core::scenario::{generate_scene, load_scene, save_scene, Scene, SceneConfig, SceneError};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{exit, read_input, CliError};
use crate::io::{write_atomic, Staged};
use crate::summary::{efficacy_of, orientation_of, sig9, write_rows_csv, RunSummary, TrialRow};
use crate::trace::{read_trace, write_trace, Header, TRACE_FORMAT, TRACE_VERSION};

#[derive(Debug, Parser)]
#[command(name = "avocc", version, about = "Desk occlusion simulator for virtual forests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a forest scene from a scene config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment and write its trace and summaries.
    Run(RunArgs),
    /// Run a base config over a grid of gains and densities.
    Sweep(SweepArgs),
    /// Query the occlusion resolver once.
    Resolve(ResolveArgs),
    /// Compute reports from one or more traces of a single strategy.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_trials: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub scene_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Desk center and yaw, `x,y,yaw` (meters, radians).
    #[arg(long, allow_hyphen_values = true)]
    pub desk: String,
    /// Resolution origin (the user's position), `x,y`.
    #[arg(long, allow_hyphen_values = true)]
    pub origin: String,
    /// ResolutionConstraints JSON; defaults apply when omitted.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub half_width: f64,
    #[arg(long, default_value_t = 0.4)]
    pub half_depth: f64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// Summary column to cluster for the elbow curve.
    #[arg(long)]
    pub elbow: Option<String>,
    #[arg(long, default_value_t = 6)]
    pub k_max: usize,
    /// Drop pointing errors whose magnitude exceeds this many degrees.
    #[arg(long)]
    pub skip_threshold: Option<f64>,
    /// Also write the per-trial rows of every trace as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Clustering seed; defaults to the first trace's run seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Generate { config, out: path } => cmd_generate(&config, &path, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Resolve(a) => cmd_resolve(&a, out),
        Command::Analyze(a) => cmd_analyze(&a, out),
    }
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::io(Path::new("<stdout>"), e)
}

pub fn cmd_generate(config: &Path, path: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let text = read_input(config)?;
    let cfg: SceneConfig =
        serde_json::from_slice(&text).map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
    let scene = generate_scene(&cfg).map_err(|e| match e {
        SceneError::GenerationFailure(m) => CliError::Generation(m),
        other => CliError::Usage(other.to_string()),
    })?;
    let bytes = save_scene(&scene);
    write_atomic(path, |w| w.write_all(&bytes))?;
    writeln!(
        out,
        "trees: {}\ndensity: {:.2} trees/ha",
        scene.trees.len(),
        scene.density()
    )
    .map_err(stdout_err)?;
    Ok(exit::OK)
}

/// A finished experiment held in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub header: Header,
    pub traces: Vec<TrialTrace>,
    pub summary: RunSummary,
}

/// Runs a resolved config without touching the filesystem (beyond
/// reading a scene file).
pub fn execute(config: &RunConfig) -> Result<RunOutput, CliError> {
    let scene = config.build_scene()?;
    execute_on(config, &scene)
}

pub fn execute_on(config: &RunConfig, scene: &Scene) -> Result<RunOutput, CliError> {
    let traces = run_experiment(
        scene,
        config.strategy,
        config.n_trials,
        &config.layout,
        &config.agent,
        &config.gains,
        &config.constraints,
    )
    .map_err(|e| CliError::Scenario(e.to_string()))?;
    let summary = RunSummary::new(config.strategy, config.seed, &traces);
    let header = Header {
        format: TRACE_FORMAT.to_string(),
        version: TRACE_VERSION.to_string(),
        config: config.clone(),
        tree_count: scene.trees.len(),
        density: scene.density(),
    };
    Ok(RunOutput {
        header,
        traces,
        summary,
    })
}

pub const TRACE_FILE: &str = "trace.jsonl";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Writes the trace and both summary renderings into the output directory.
pub fn write_outputs(dir: &Path, run: &RunOutput) -> Result<(), CliError> {
    let mut staged = Staged::new();
    staged.add(&dir.join(TRACE_FILE), |w| write_trace(w, &run.header, &run.traces))?;
    staged.add(&dir.join(SUMMARY_CSV), |w| {
        run.summary.write_csv(w).map_err(std::io::Error::other)
    })?;
    staged.add(&dir.join(SUMMARY_JSON), |w| {
        w.write_all(run.summary.to_json().as_bytes())?;
        w.write_all(b"\n")
    })?;
    staged.commit()
}

pub fn load_run_config(
    path: &Path,
    strategy: Option<Strategy>,
    output_dir: Option<&PathBuf>,
) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = strategy {
        cfg.strategy = s;
    }
    if let Some(d) = output_dir {
        cfg.output_dir = d.clone();
    }
    Ok(cfg)
}

pub fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut cfg = load_run_config(&a.config, a.strategy, a.output_dir.as_ref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n_trials {
        cfg.n_trials = n;
    }
    if let Some(f) = &a.scene_file {
        cfg.scene_file = Some(f.clone());
        cfg.scene = None;
    }
    let cfg = cfg.resolve()?;
    let run = execute(&cfg)?;
    write_outputs(&cfg.output_dir, &run)?;
    let s = &run.summary;
    writeln!(
        out,
        "{} trials, strategy {}: incidence {}, resolved {} -> {}",
        s.n_trials,
        s.strategy,
        s.efficacy.map_or("n/a".into(), |e| e.occlusion_incidence.to_string()),
        s.efficacy.map_or("n/a".into(), |e| e.resolved_fraction.to_string()),
        cfg.output_dir.display()
    )
    .map_err(stdout_err)?;
    Ok(exit::OK)
}

/// Sweep axes. A missing axis keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub rotation_gain: Vec<f64>,
    pub translation_gain: Vec<f64>,
    pub curvature_gain: Vec<f64>,
    /// Trees per hectare; needs an inline scene.
    pub tree_density: Vec<f64>,
    pub seed: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub rotation_gain: f64,
    pub translation_gain: f64,
    pub curvature_gain: f64,
    pub tree_density: Option<f64>,
    pub seed: u64,
}

impl SweepGrid {
    /// Cells in grid order: rotation gain varies slowest, seed fastest.
    pub fn cells(&self, base: &RunConfig) -> Vec<SweepCell> {
        fn axis<T: Copy>(v: &[T], base: T) -> Vec<T> {
            if v.is_empty() {
                vec![base]
            } else {
                v.to_vec()
            }
        }
        let g = base.gains;
        let densities: Vec<Option<f64>> = if self.tree_density.is_empty() {
            vec![None]
        } else {
            self.tree_density.iter().map(|&d| Some(d)).collect()
        };
        let mut cells = Vec::new();
        for &r in &axis(&self.rotation_gain, g.rotation_gain) {
            for &t in &axis(&self.translation_gain, g.translation_gain) {
                for &c in &axis(&self.curvature_gain, g.curvature_gain) {
                    for &d in &densities {
                        for &s in &axis(&self.seed, base.seed) {
                            cells.push(SweepCell {
                                rotation_gain: r,
                                translation_gain: t,
                                curvature_gain: c,
                                tree_density: d,
                                seed: s,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

impl SweepCell {
    pub fn apply(&self, base: &RunConfig) -> Result<RunConfig, CliError> {
        let mut cfg = base.clone();
        cfg.gains.rotation_gain = self.rotation_gain;
        cfg.gains.translation_gain = self.translation_gain;
        cfg.gains.curvature_gain = self.curvature_gain;
        cfg.seed = self.seed;
        if let Some(d) = self.tree_density {
            let scene = cfg
                .scene
                .as_mut()
                .ok_or_else(|| CliError::Usage("tree_density axis needs an inline scene".into()))?;
            if !(d.is_finite() && d >= 0.0) {
                return Err(CliError::Usage(format!("tree density {d} is not a valid density")));
            }
            let area_ha = scene.extent[0] * scene.extent[1] / 10_000.0;
            scene.tree_count = (d * area_ha).round() as usize;
        }
        cfg.resolve()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub rotation_gain: f64,
    pub translation_gain: f64,
    pub curvature_gain: f64,
    pub tree_density: f64,
    pub tree_count: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub n_trials: usize,
    pub occlusion_incidence: f64,
    /// Empty when no trial started occluded.
    pub resolved_fraction: Option<f64>,
    pub mean_abs_applied_rotation_deg: f64,
}

pub fn sweep_row(cell: usize, params: &SweepCell, run: &RunOutput) -> SweepRow {
    let rows = &run.summary.rows;
    let n = rows.len();
    let incidence = rows.iter().filter(|r| r.occluded_at_travel_end).count() as f64 / n as f64;
    let mean_abs = run.traces.iter().map(|t| t.applied_rotation_total.abs()).sum::<f64>() / n as f64;
    SweepRow {
        cell,
        rotation_gain: params.rotation_gain,
        translation_gain: params.translation_gain,
        curvature_gain: params.curvature_gain,
        tree_density: sig9(run.header.density),
        tree_count: run.header.tree_count,
        seed: params.seed,
        strategy: run.summary.strategy,
        n_trials: n,
        occlusion_incidence: sig9(incidence),
        resolved_fraction: run.summary.efficacy.map(|e| e.resolved_fraction),
        mean_abs_applied_rotation_deg: sig9(mean_abs),
    }
}

/// Runs every cell, in parallel, and returns rows in grid order. The first
/// failing cell in grid order is reported.
pub fn run_sweep(base: &RunConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>, CliError> {
    let cells = grid.cells(base);
    let results: Vec<Result<SweepRow, CliError>> = cells
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            let cfg = cell.apply(base)?;
            let run = execute(&cfg)?;
            Ok(sweep_row(i, cell, &run))
        })
        .collect();
    results
        .into_iter()
        .zip(&cells)
        .enumerate()
        .map(|(i, (r, cell))| r.map_err(|e| name_cell(e, i, cell)))
        .collect()
}

fn name_cell(e: CliError, i: usize, c: &SweepCell) -> CliError {
    let at = format!(
        "cell {i} (rotation_gain {}, translation_gain {}, curvature_gain {}, tree_density {}, seed {})",
        c.rotation_gain,
        c.translation_gain,
        c.curvature_gain,
        c.tree_density.map_or("base".into(), |d| d.to_string()),
        c.seed
    );
    match e {
        CliError::Usage(m) => CliError::Usage(format!("{at}: {m}")),
        CliError::Generation(m) => CliError::Generation(format!("{at}: {m}")),
        CliError::Scenario(m) => CliError::Scenario(format!("{at}: {m}")),
        io @ CliError::Io { .. } => io,
    }
}

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";

pub fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let base = load_run_config(&a.config, a.strategy, a.output_dir.as_ref())?;
    // Catch config errors once, before fanning out.
    base.clone().resolve()?;
    let grid_text = read_input(&a.grid)?;
    let grid: SweepGrid =
        serde_json::from_slice(&grid_text).map_err(|e| CliError::Usage(format!("{}: {e}", a.grid.display())))?;
    let rows = run_sweep(&base, &grid)?;
    let mut staged = Staged::new();
    staged.add(&base.output_dir.join(SWEEP_CSV), |w| {
        let mut c = csv::Writer::from_writer(w);
        for r in &rows {
            c.serialize(r).map_err(std::io::Error::other)?;
        }
        c.flush()
    })?;
    staged.add(&base.output_dir.join(SWEEP_JSON), |w| {
        serde_json::to_writer_pretty(&mut *w, &rows)?;
        w.write_all(b"\n")
    })?;
    staged.commit()?;
    writeln!(out, "{} cells -> {}", rows.len(), base.output_dir.display()).map_err(stdout_err)?;
    Ok(exit::OK)
}

fn parse_numbers(text: &str, n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let v: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(CliError::Usage(format!(
            "{what} expects {n} comma-separated numbers, got {text:?}"
        ))),
    }
}

pub fn cmd_resolve(a: &ResolveArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let scene =
        load_scene(&read_input(&a.scene)?).map_err(|e| CliError::Usage(format!("{}: {e}", a.scene.display())))?;
    let d = parse_numbers(&a.desk, 3, "--desk")?;
    let o = parse_numbers(&a.origin, 2, "--origin")?;
    let constraints = match &a.constraints {
        Some(p) => serde_json::from_slice::<ResolutionConstraints>(&read_input(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => ResolutionConstraints::default(),
    };
    let desk = OrientedRect::new(Vec2::new(d[0], d[1]), a.half_width, a.half_depth, d[2])
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let query = ResolutionQuery {
        origin: Vec2::new(o[0], o[1]),
        desk,
        obstacles: scene.trees.clone(),
        constraints,
    };
    let outcome = find_occlusion_free(&query).map_err(|e| CliError::Usage(e.to_string()))?;
    let text = serde_json::to_string_pretty(&outcome).expect("outcome serializes");
    writeln!(out, "{text}").map_err(stdout_err)?;
    Ok(match outcome.status {
        ResolutionStatus::Unresolved => exit::UNRESOLVED,
        ResolutionStatus::Resolved | ResolutionStatus::AlreadyFree => exit::OK,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowReport {
    pub column: String,
    pub k_max: usize,
    pub curve: Vec<(usize, f64)>,
    pub knee: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub strategy: Strategy,
    pub n_traces: usize,
    pub n_trials: usize,
    pub efficacy: Option<avocc_core::metrics::EfficacyReport>,
    pub orientation: Option<avocc_core::metrics::OrientationReport>,
    pub elbow: Option<ElbowReport>,
}

pub fn analyze(
    traces: &[(PathBuf, crate::trace::ParsedTrace)],
    elbow: Option<(&str, usize)>,
    skip_threshold: Option<f64>,
    seed: Option<u64>,
) -> Result<(AnalysisReport, Vec<TrialRow>), CliError> {
    let (first_path, first) = traces
        .first()
        .ok_or_else(|| CliError::Usage("no trace files given".into()))?;
    let strategy = first.strategy();
    if let Some((p, t)) = traces.iter().find(|(_, t)| t.strategy() != strategy) {
        return Err(CliError::Usage(format!(
            "mixed strategies: {} is {strategy}, {} is {}",
            first_path.display(),
            p.display(),
            t.strategy()
        )));
    }
    let rows: Vec<TrialRow> = traces
        .iter()
        .flat_map(|(_, t)| t.trials.iter().map(TrialRow::from_trace))
        .collect();
    let elbow = match elbow {
        None => None,
        Some((column, k_max)) => {
            if k_max == 0 {
                return Err(CliError::Usage("--k-max must be at least 1".into()));
            }
            let mut values = Vec::new();
            for r in &rows {
                if let Some(v) = r.column(column).map_err(CliError::Usage)? {
                    values.push(v);
                }
            }
            let seed = derive_seed(seed.unwrap_or(first.header.config.seed), Stream::KMeans);
            let curve = if values.is_empty() {
                Vec::new()
            } else {
                elbow_curve(&values, k_max, seed)
                    .map_err(|e| CliError::Usage(e.to_string()))?
                    .into_iter()
                    .map(|(k, w)| (k, sig9(w)))
                    .collect()
            };
            Some(ElbowReport {
                column: column.to_string(),
                k_max,
                knee: elbow_knee(&curve),
                curve,
            })
        }
    };
    let report = AnalysisReport {
        strategy,
        n_traces: traces.len(),
        n_trials: rows.len(),
        efficacy: efficacy_of(&rows, strategy),
        orientation: orientation_of(&rows, skip_threshold),
        elbow,
    };
    Ok((report, rows))
}

pub fn load_trace(path: &Path) -> Result<crate::trace::ParsedTrace, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    read_trace(BufReader::new(f)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let traces = a
        .traces
        .iter()
        .map(|p| load_trace(p).map(|t| (p.clone(), t)))
        .collect::<Result<Vec<_>, _>>()?;
    let (report, rows) = analyze(
        &traces,
        a.elbow.as_deref().map(|c| (c, a.k_max)),
        a.skip_threshold,
        a.seed,
    )?;
    if let Some(path) = &a.csv {
        write_atomic(path, |w| write_rows_csv(w, &rows).map_err(std::io::Error::other))?;
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    writeln!(out, "{text}").map_err(stdout_err)?;
    Ok(exit::OK)
}
