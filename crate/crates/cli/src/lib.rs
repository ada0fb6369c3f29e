//! Command-line front end for `mnri-core`: model comparison reports,
//! simulation tables, spline expansion and plot data.

pub mod error;
pub mod table;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mnri::glm::{fit_nested, Link, NestedFits};
use mnri::inference::{
    test_mnri_single, test_mnri_train_test, test_nri_normal_legacy, test_nri_normal_legacy_train_test, TestResult,
};
use mnri::reclass::{mnri_train_test, nri_train_test, Kernel, ReclassReport, TrainTestPair};
use mnri::sim::{expand_grid, run_grid, NullStyle, SimConfig, SimMode, SimTableRow, DEFAULT_SEED};
use mnri::spline::SplineBasis;
use serde::{Deserialize, Serialize};

pub use error::CliError;
pub use table::{build_design, ColumnSpec, Design, Table};

pub const TOOL_VERSION: &str = concat!("mnri ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "mnri", version, about = "NRI and modified NRI for nested binary-response models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit base and expanded models and report reclassification statistics as JSON.
    Compare(CompareArgs),
    /// Run a Monte Carlo size study and write one CSV row per cell.
    Simulate(SimulateArgs),
    /// Write per-subject fitted probabilities from the base and expanded models.
    Plotdata(PlotArgs),
    /// Append restricted cubic spline basis columns to a CSV.
    Spline(SplineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Input CSV with a header row.
    pub input: PathBuf,
    #[arg(long)]
    pub outcome: String,
    /// Base covariates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub base: Vec<String>,
    /// New covariates, comma separated.
    #[arg(long = "new", value_delimiter = ',')]
    pub new_cols: Vec<String>,
    /// Expand a covariate as a restricted cubic spline, `col=k`. Repeatable.
    #[arg(long, value_parser = parse_spline_spec)]
    pub spline: Vec<(String, usize)>,
    #[arg(long, default_value_t = Link::Logit)]
    pub link: Link,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ModelArgs {
    pub fn column_spec(&self) -> ColumnSpec {
        ColumnSpec {
            outcome: self.outcome.clone(),
            base: self.base.clone(),
            new: self.new_cols.clone(),
            spline: self.spline.iter().cloned().collect(),
        }
    }
}

fn parse_spline_spec(s: &str) -> Result<(String, usize), String> {
    let (col, k) = s.split_once('=').ok_or_else(|| format!("expected col=k, got '{s}'"))?;
    let k: usize = k.trim().parse().map_err(|_| format!("bad knot count in '{s}'"))?;
    Ok((col.trim().to_owned(), k))
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Independent test sample with the same header; switches to train/test mode.
    #[arg(long)]
    pub test_file: Option<PathBuf>,
    /// Also report the NRI on the doubled (classical) scale.
    #[arg(long)]
    pub classic_scale: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    pub pi0: Vec<f64>,
    #[arg(long = "mu-x", value_delimiter = ',', required_unless_present = "config")]
    pub mu_x: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub rho: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    #[arg(long, default_value_t = SimMode::Single)]
    pub mode: SimMode,
    #[arg(long = "null-style", default_value_t = NullStyle::Enforced)]
    pub null_style: NullStyle,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// JSON grid file: a `GridSpec` object or an array of cell configs.
    /// Overrides the grid flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SplineArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub column: String,
    #[arg(long, default_value_t = 4)]
    pub knots: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Grid description accepted by `simulate --config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: Vec<usize>,
    pub pi0: Vec<f64>,
    pub mu_x: Vec<f64>,
    #[serde(default = "zero_rho")]
    pub rho: Vec<f64>,
    pub replicates: usize,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default)]
    pub null_style: NullStyle,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn zero_rho() -> Vec<f64> {
    vec![0.0]
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_alpha() -> f64 {
    0.05
}

impl GridSpec {
    pub fn cells(&self) -> Vec<SimConfig> {
        let template = SimConfig::new(0, 0.0, 0.0, 0.0, self.replicates)
            .with_mode(self.mode)
            .with_null_style(self.null_style)
            .with_seed(self.seed);
        let template = SimConfig { alpha: self.alpha, ..template };
        expand_grid(&self.n, &self.pi0, &self.mu_x, &self.rho, &template)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    Single,
    TrainTest,
}

/// Statistics evaluated on the test sample with training-fit score differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTestSummary {
    pub n_test: usize,
    pub ybar_test: f64,
    pub nri_hard: f64,
    pub nri_smooth: f64,
    pub mnri_smooth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub tool_version: String,
    pub link: Link,
    pub columns: ColumnSpec,
    /// Knots used for each spline column (from the training data).
    pub knots: BTreeMap<String, Vec<f64>>,
    pub mode: CompareMode,
    pub n: usize,
    pub events: usize,
    pub p: usize,
    pub q: usize,
    pub base_coefficients: Vec<f64>,
    pub expanded_coefficients: Vec<f64>,
    /// Single-sample statistics on the input (training) data.
    pub reclass: ReclassReport,
    pub train_test: Option<TrainTestSummary>,
    pub mnri_test: TestResult,
    pub nri_test: TestResult,
    pub classic_nri: Option<f64>,
}

fn fit(design: &Design, link: Link) -> Result<NestedFits, CliError> {
    Ok(fit_nested(design.dataset.clone(), link)?)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<CompareReport, CliError> {
    let m = &args.model;
    let spec = m.column_spec();
    let table = Table::read(&m.input)?;
    let design = build_design(&table, &spec, None)?;
    let fits = fit(&design, m.link)?;
    let reclass = ReclassReport::compute(&fits)?;

    let (mode, train_test, mnri_test, nri_test) = match &args.test_file {
        None => (CompareMode::Single, None, test_mnri_single(&fits)?, test_nri_normal_legacy(&fits)?),
        Some(path) => {
            let test_table = Table::read(path)?;
            if test_table.headers != table.headers {
                return Err(CliError::data(format!(
                    "{}: header differs from the training file",
                    path.display()
                )));
            }
            let test_design = build_design(&test_table, &spec, Some(&design.knots))?;
            let pair = TrainTestPair::new(fits.clone(), fit(&test_design, m.link)?)?;
            let summary = TrainTestSummary {
                n_test: pair.test_data().n(),
                ybar_test: pair.test_data().ybar(),
                nri_hard: nri_train_test(&pair, Kernel::Hard)?,
                nri_smooth: nri_train_test(&pair, Kernel::Smooth)?,
                mnri_smooth: mnri_train_test(&pair)?,
            };
            (
                CompareMode::TrainTest,
                Some(summary),
                test_mnri_train_test(&pair)?,
                test_nri_normal_legacy_train_test(&pair)?,
            )
        }
    };

    Ok(CompareReport {
        tool_version: TOOL_VERSION.to_owned(),
        link: m.link,
        columns: spec,
        knots: design.knots,
        mode,
        n: design.dataset.n(),
        events: design.dataset.events(),
        p: design.dataset.p(),
        q: design.dataset.q(),
        base_coefficients: fits.base.coefficients.clone(),
        expanded_coefficients: fits.expanded.coefficients.clone(),
        classic_nri: args.classic_scale.then(|| reclass.classic_nri()),
        reclass,
        train_test,
        mnri_test,
        nri_test,
    })
}

/// Cells for `simulate`, from the config file when given, else from flags.
pub fn simulate_cells(args: &SimulateArgs) -> Result<Vec<SimConfig>, CliError> {
    let cells = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            if value.is_array() {
                serde_json::from_value::<Vec<SimConfig>>(value)?
            } else {
                serde_json::from_value::<GridSpec>(value)?.cells()
            }
        }
        None => GridSpec {
            n: args.n.clone(),
            pi0: args.pi0.clone(),
            mu_x: args.mu_x.clone(),
            rho: args.rho.clone(),
            replicates: args.reps,
            mode: args.mode,
            null_style: args.null_style,
            seed: args.seed,
            alpha: args.alpha,
        }
        .cells(),
    };
    if cells.is_empty() {
        return Err(CliError::data("empty simulation grid"));
    }
    for c in &cells {
        c.validate()?;
    }
    Ok(cells)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Vec<SimTableRow>, CliError> {
    Ok(run_grid(&simulate_cells(args)?)?)
}

pub fn write_sim_rows<W: Write>(out: W, rows: &[SimTableRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRecord {
    pub id: usize,
    pub y: u8,
    pub prob_base: f64,
    pub prob_expanded: f64,
}

pub fn cmd_plotdata(args: &PlotArgs) -> Result<Vec<PlotRecord>, CliError> {
    let m = &args.model;
    let table = Table::read(&m.input)?;
    let design = build_design(&table, &m.column_spec(), None)?;
    let fits = fit(&design, m.link)?;
    Ok(design
        .dataset
        .y()
        .iter()
        .zip(fits.base.fitted_probs.iter().zip(&fits.expanded.fitted_probs))
        .enumerate()
        .map(|(i, (y, (b, e)))| PlotRecord { id: i + 1, y: *y as u8, prob_base: *b, prob_expanded: *e })
        .collect())
}

pub fn write_plot_records<W: Write>(out: W, rows: &[PlotRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Expanded table and the basis that produced the new columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineOutput {
    pub basis: SplineBasis,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl SplineOutput {
    pub fn knots_comment(&self, column: &str) -> String {
        let knots: Vec<String> = self.basis.knots().iter().map(f64::to_string).collect();
        format!("knots {column}: {}", knots.join(","))
    }
}

pub fn cmd_spline(args: &SplineArgs) -> Result<SplineOutput, CliError> {
    let table = Table::read(&args.input)?;
    let x = table.numeric(&args.column)?;
    let basis = SplineBasis::from_data(&x, args.knots)?;
    let names = basis.column_names(&args.column);
    if let Some(clash) = names.iter().find(|n| table.headers.contains(n)) {
        return Err(CliError::data(format!("column '{clash}' already exists")));
    }
    let cols = basis.evaluate_columns(&x);
    let mut headers = table.headers.clone();
    headers.extend(names);
    let rows = table
        .rows
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            row.extend(cols.iter().map(|c| c[i].to_string()));
            row
        })
        .collect();
    Ok(SplineOutput { basis, headers, rows })
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| CliError::data(format!("cannot write {}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Runs a parsed command, writing its output.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Compare(args) => {
            let report = cmd_compare(&args)?;
            let mut out = open_out(args.model.out.as_deref())?;
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
            out.flush()?;
        }
        Command::Simulate(args) => {
            let rows = cmd_simulate(&args)?;
            write_sim_rows(open_out(args.out.as_deref())?, &rows)?;
        }
        Command::Plotdata(args) => {
            let rows = cmd_plotdata(&args)?;
            write_plot_records(open_out(args.model.out.as_deref())?, &rows)?;
        }
        Command::Spline(args) => {
            let output = cmd_spline(&args)?;
            table::write_csv(
                open_out(args.out.as_deref())?,
                &[output.knots_comment(&args.column)],
                &output.headers,
                output.rows,
            )?;
        }
    }
    Ok(())
}
