//! Long-table ingestion, bound selection and the batch commands behind the
//! `poismix` binary.
//!
//! Count files are UTF-8 CSV or TSV with a header naming the columns `gene`,
//! `subject`, `group`, `count` and `read_depth` (any order, extra columns
//! ignored). Each row is one cell.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anova::{
    benjamini_hochberg, covariate_permutation_test, distance_matrix, permutation_test, CovariateMatrix,
    StudyLayout, TestResult,
};
use crate::error::{Error, Result};
use crate::likelihood::CountSample;
use crate::measures::DEFAULT_TAIL_TOL;
use crate::rng::child_seed;
use crate::simulate::{model_pair, run_power_study, DesignSpec, SimReport, StudyConfig};
use crate::solvers::{fit, SolverConfig};

pub const REQUIRED_COLUMNS: [&str; 5] = ["gene", "subject", "group", "count", "read_depth"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Tsv,
}

impl TableFormat {
    fn delimiter(self) -> u8 {
        match self {
            TableFormat::Csv => b',',
            TableFormat::Tsv => b'\t',
        }
    }

    /// `.tsv` and `.txt` map to TSV, everything else to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(e) if e == "tsv" || e == "txt" => TableFormat::Tsv,
            _ => TableFormat::Csv,
        }
    }
}

/// Which distances a batch test uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    /// W1 between fitted mixing distributions.
    Mixing,
    /// W1 between their Poisson-smoothed mixture PMFs.
    Mixture,
    Both,
}

impl DistanceKind {
    fn variants(self) -> &'static [DistanceKind] {
        match self {
            DistanceKind::Mixing => &[DistanceKind::Mixing],
            DistanceKind::Mixture => &[DistanceKind::Mixture],
            DistanceKind::Both => &[DistanceKind::Mixing, DistanceKind::Mixture],
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::Mixing => "mixing",
            DistanceKind::Mixture => "mixture",
            DistanceKind::Both => "both",
        })
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mixing" => Ok(DistanceKind::Mixing),
            "mixture" | "smoothed" => Ok(DistanceKind::Mixture),
            "both" => Ok(DistanceKind::Both),
            _ => Err(Error::Config(format!("unknown distance {s:?}; valid: mixing, mixture, both"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Explicit support bound; selected from the data when absent.
    pub b: Option<f64>,
    pub b_quantile: f64,
    pub b_factor: f64,
    /// Select the bound per gene instead of pooling ratios across genes.
    pub b_per_gene: bool,
    pub solver: SolverConfig,
    pub n_perm: usize,
    pub seed: u64,
    pub distances: DistanceKind,
    pub fdr_q: f64,
    pub covariates_path: Option<PathBuf>,
    pub diagnosis_col: Option<String>,
    pub tail_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            b: None,
            b_quantile: 0.99,
            b_factor: 4.0 / 3.0,
            b_per_gene: false,
            solver: SolverConfig::default(),
            n_perm: 100_000,
            seed: 0,
            distances: DistanceKind::Both,
            fdr_q: 0.05,
            covariates_path: None,
            diagnosis_col: None,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_quantile > 0.0 && self.b_quantile < 1.0) {
            return Err(Error::Config(format!("b_quantile {} outside (0, 1)", self.b_quantile)));
        }
        if !(self.b_factor >= 1.0 && self.b_factor.is_finite()) {
            return Err(Error::Config(format!("b_factor {} must be at least 1", self.b_factor)));
        }
        if let Some(b) = self.b {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("bound {b} must be positive")));
            }
        }
        if self.n_perm == 0 {
            return Err(Error::Config("n_perm must be at least 1".into()));
        }
        if !(self.fdr_q > 0.0 && self.fdr_q < 1.0) {
            return Err(Error::Config(format!("fdr_q {} outside (0, 1)", self.fdr_q)));
        }
        if self.covariates_path.is_some() && self.diagnosis_col.is_none() {
            return Err(Error::Config("--covariates needs --diagnosis-col".into()));
        }
        self.solver.validate()
    }
}

/// Type-7 (linear interpolation) sample quantile.
pub fn quantile_type7(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// `cfg.b` when set, otherwise `b_factor` times the `b_quantile` quantile of
/// the ratios, rounded up to a multiple of 5 and at least 5.
pub fn select_bound(all_ratios: &[f64], cfg: &RunConfig) -> Result<f64> {
    if let Some(b) = cfg.b {
        return Ok(b);
    }
    if all_ratios.is_empty() {
        return Err(Error::domain("bound selection needs at least one ratio"));
    }
    if all_ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::domain("ratios must be finite and nonnegative"));
    }
    let raw = cfg.b_factor * quantile_type7(all_ratios, cfg.b_quantile);
    Ok(((raw / 5.0).ceil() * 5.0).max(5.0))
}

/// One gene's cells grouped by subject, subjects in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneData {
    pub subjects: Vec<String>,
    pub groups: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub read_depths: Vec<Vec<f64>>,
}

impl GeneData {
    /// Distinct group labels in lexicographic order; group `k` of
    /// [`GeneData::layout`] is `group_labels()[k]`.
    pub fn group_labels(&self) -> Vec<String> {
        self.groups.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn layout(&self) -> Result<StudyLayout> {
        let labels = self.group_labels();
        let idx = self
            .groups
            .iter()
            .map(|g| labels.binary_search(g).expect("label present"))
            .collect();
        StudyLayout::new(idx)
    }

    pub fn samples(&self, bound: f64) -> Result<Vec<CountSample>> {
        self.counts
            .iter()
            .zip(&self.read_depths)
            .map(|(c, r)| CountSample::new(c.clone(), r.clone(), bound))
            .collect()
    }

    pub fn ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.counts
            .iter()
            .zip(&self.read_depths)
            .flat_map(|(c, r)| c.iter().zip(r).map(|(&x, &r)| x as f64 / r))
    }
}

pub type CountTable = BTreeMap<String, GeneData>;

fn column_index(headers: &csv::StringRecord) -> Result<[usize; 5]> {
    let mut seen = BTreeSet::new();
    for h in headers {
        if !seen.insert(h) {
            return Err(Error::parse(1, format!("duplicate column {h:?} in header")));
        }
    }
    let mut idx = [0; 5];
    for (k, name) in REQUIRED_COLUMNS.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Error::parse(1, format!("missing column {name:?}")))?;
    }
    Ok(idx)
}

/// Reads a long-format count table. Errors carry the 1-based line number.
pub fn ingest_counts(path: &Path, format: TableFormat) -> Result<CountTable> {
    let file = File::open(path)?;
    ingest_counts_from(file, format)
}

pub fn ingest_counts_from<R: std::io::Read>(reader: R, format: TableFormat) -> Result<CountTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .trim(csv::Trim::All)
        .from_reader(reader);
    let idx = column_index(rdr.headers()?)?;

    struct Subject {
        group: String,
        group_line: u64,
        counts: Vec<u64>,
        depths: Vec<f64>,
    }
    let mut genes: BTreeMap<String, BTreeMap<String, Subject>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let (gene, subject, group) = (field(0), field(1), field(2));
        for (k, v) in [gene, subject, group].iter().enumerate() {
            if v.is_empty() {
                return Err(Error::parse(line, format!("empty {}", REQUIRED_COLUMNS[k])));
            }
        }
        let count: u64 = field(3)
            .parse()
            .map_err(|_| Error::parse(line, format!("count {:?} is not a nonnegative integer", field(3))))?;
        let depth: f64 = field(4)
            .parse()
            .map_err(|_| Error::parse(line, format!("read_depth {:?} is not a number", field(4))))?;
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(Error::parse(line, format!("read_depth {depth} must be positive")));
        }
        let entry = genes
            .entry(gene.to_string())
            .or_default()
            .entry(subject.to_string())
            .or_insert_with(|| Subject {
                group: group.to_string(),
                group_line: line,
                counts: Vec::new(),
                depths: Vec::new(),
            });
        if entry.group != group {
            return Err(Error::parse(
                line,
                format!(
                    "subject {subject:?} of gene {gene:?} is in group {group:?} here but {:?} at line {}",
                    entry.group, entry.group_line
                ),
            ));
        }
        entry.counts.push(count);
        entry.depths.push(depth);
    }
    Ok(genes
        .into_iter()
        .map(|(gene, subjects)| {
            let mut g = GeneData {
                subjects: Vec::new(),
                groups: Vec::new(),
                counts: Vec::new(),
                read_depths: Vec::new(),
            };
            for (name, s) in subjects {
                g.subjects.push(name);
                g.groups.push(s.group);
                g.counts.push(s.counts);
                g.read_depths.push(s.depths);
            }
            (gene, g)
        })
        .collect())
}

/// Writes a table that [`ingest_counts`] reads back unchanged.
pub fn emit_counts(path: &Path, table: &CountTable, format: TableFormat) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    emit_counts_to(file, table, format)
}

pub fn emit_counts_to<W: Write>(writer: W, table: &CountTable, format: TableFormat) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(format.delimiter()).from_writer(writer);
    w.write_record(REQUIRED_COLUMNS)?;
    for (gene, g) in table {
        for (i, subject) in g.subjects.iter().enumerate() {
            for (x, r) in g.counts[i].iter().zip(&g.read_depths[i]) {
                w.write_record([gene, subject, &g.groups[i], &x.to_string(), &r.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a covariate CSV with a `subject` column and numeric covariates,
/// returning rows in the order of `subjects`.
pub fn load_covariates(path: &Path, subjects: &[String]) -> Result<CovariateMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(TableFormat::from_path(path).delimiter())
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let subj_col = headers
        .iter()
        .position(|h| h == "subject")
        .ok_or_else(|| Error::parse(1, "covariate file lacks a subject column"))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != subj_col)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(names.len());
        for (i, v) in rec.iter().enumerate() {
            if i == subj_col {
                continue;
            }
            values.push(v.parse::<f64>().map_err(|_| {
                Error::parse(line, format!("covariate {v:?} is not numeric; encode categories first"))
            })?);
        }
        if rows.insert(rec[subj_col].to_string(), values).is_some() {
            return Err(Error::parse(line, format!("subject {:?} listed twice", &rec[subj_col])));
        }
    }
    let mut z = DMatrix::zeros(subjects.len(), names.len());
    for (i, s) in subjects.iter().enumerate() {
        let row = rows
            .get(s)
            .ok_or_else(|| Error::Design(format!("no covariates for subject {s:?}")))?;
        for (j, v) in row.iter().enumerate() {
            z[(i, j)] = *v;
        }
    }
    CovariateMatrix::new(z, names)
}

/// One row of the batch result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub gene: String,
    pub test: DistanceKind,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub q_value: Option<f64>,
    pub converged_fraction: Option<f64>,
    #[serde(rename = "B_used")]
    pub b_used: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectFit {
    pub subject: String,
    pub n_cells: usize,
    pub iterations: usize,
    pub converged: bool,
    pub support_size: usize,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneDiagnostics {
    pub gene: String,
    pub b_used: f64,
    pub fits: Vec<SubjectFit>,
    pub tests: Vec<(DistanceKind, TestResult)>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub config: RunConfig,
    pub rows: Vec<ResultRow>,
    pub genes: Vec<GeneDiagnostics>,
}

/// Stable per-gene seed derived from the run seed and the gene name.
fn gene_seed(seed: u64, gene: &str) -> u64 {
    let h = gene
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    child_seed(seed, h, 0)
}

fn test_gene(
    gene: &str,
    data: &GeneData,
    bound: f64,
    cfg: &RunConfig,
    covariates: Option<&(CovariateMatrix, usize)>,
) -> Result<GeneDiagnostics> {
    let samples = data.samples(bound)?;
    let layout = if covariates.is_none() { Some(data.layout()?) } else { None };
    let mut fits = Vec::with_capacity(samples.len());
    let mut estimates = Vec::with_capacity(samples.len());
    for (s, name) in samples.iter().zip(&data.subjects) {
        let f = fit(s, &cfg.solver)?;
        fits.push(SubjectFit {
            subject: name.clone(),
            n_cells: s.len(),
            iterations: f.iterations,
            converged: f.converged,
            support_size: f.estimate.len(),
            log_likelihood: f.phi(),
        });
        estimates.push(f.estimate);
    }
    let seed = gene_seed(cfg.seed, gene);
    let mut tests = Vec::new();
    for &kind in cfg.distances.variants() {
        let d = distance_matrix(&estimates, kind == DistanceKind::Mixture, cfg.tail_tol)?;
        let t = match (covariates, &layout) {
            (Some((z, col)), _) => covariate_permutation_test(&d, z, *col, cfg.n_perm, seed, &[cfg.fdr_q])?,
            (None, Some(layout)) => permutation_test(&d, layout, cfg.n_perm, seed, &[cfg.fdr_q])?,
            (None, None) => unreachable!("layout is built when there are no covariates"),
        };
        tests.push((kind, t));
    }
    Ok(GeneDiagnostics {
        gene: gene.to_string(),
        b_used: bound,
        fits,
        tests,
        error: None,
    })
}

/// Runs the full batch pipeline on an in-memory table.
pub fn run_tests(table: &CountTable, cfg: &RunConfig) -> Result<TestReport> {
    cfg.validate()?;
    if table.is_empty() {
        return Err(Error::Config("count table has no genes".into()));
    }
    let pooled = if cfg.b_per_gene {
        None
    } else {
        let ratios: Vec<f64> = table.values().flat_map(GeneData::ratios).collect();
        Some(select_bound(&ratios, cfg)?)
    };
    let covariates = match (&cfg.covariates_path, &cfg.diagnosis_col) {
        (Some(path), Some(col)) => {
            let subjects = &table.values().next().expect("nonempty").subjects;
            if table.values().any(|g| &g.subjects != subjects) {
                return Err(Error::Config("covariate adjustment needs the same subjects for every gene".into()));
            }
            let z = load_covariates(path, subjects)?;
            let idx = z
                .column_index(col)
                .ok_or_else(|| Error::Config(format!("diagnosis column {col:?} not in covariate file")))?;
            Some((z, idx))
        }
        _ => None,
    };

    let genes: Vec<GeneDiagnostics> = table
        .par_iter()
        .map(|(gene, data)| {
            let bound = match pooled {
                Some(b) => Ok(b),
                None => select_bound(&data.ratios().collect::<Vec<_>>(), cfg),
            };
            let bound_used = bound.as_ref().ok().copied();
            let result = bound.and_then(|b| test_gene(gene, data, b, cfg, covariates.as_ref()));
            match result {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("gene {gene}: {e}");
                    GeneDiagnostics {
                        gene: gene.clone(),
                        b_used: bound_used.unwrap_or(f64::NAN),
                        fits: Vec::new(),
                        tests: Vec::new(),
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();

    let mut rows = Vec::new();
    for &kind in cfg.distances.variants() {
        let ok: Vec<(usize, f64)> = genes
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.tests.iter().find(|t| t.0 == kind).map(|t| (i, t.1.p_value)))
            .collect();
        let p: Vec<f64> = ok.iter().map(|x| x.1).collect();
        let q = benjamini_hochberg(&p, cfg.fdr_q)?.adjusted;
        let q_of: BTreeMap<usize, f64> = ok.iter().map(|x| x.0).zip(q).collect();
        for (i, g) in genes.iter().enumerate() {
            let test = g.tests.iter().find(|t| t.0 == kind).map(|t| &t.1);
            let converged = (!g.fits.is_empty())
                .then(|| g.fits.iter().filter(|f| f.converged).count() as f64 / g.fits.len() as f64);
            rows.push(ResultRow {
                gene: g.gene.clone(),
                test: kind,
                statistic: test.and_then(|t| t.statistic),
                p_value: test.map(|t| t.p_value),
                q_value: q_of.get(&i).copied(),
                converged_fraction: converged,
                b_used: g.b_used,
                error: g.error.clone(),
            });
        }
    }
    rows.sort_by(|a, b| a.gene.cmp(&b.gene).then((a.test as u8).cmp(&(b.test as u8))));
    Ok(TestReport {
        config: cfg.clone(),
        rows,
        genes,
    })
}

/// `path` with its extension replaced by `ext`.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Tests every gene of `counts_path`; writes `<out>.csv` and `<out>.json`.
pub fn run_test_command(cfg: &RunConfig, counts_path: &Path, out_path: &Path) -> Result<TestReport> {
    cfg.validate()?;
    let table = ingest_counts(counts_path, TableFormat::from_path(counts_path))?;
    let report = run_tests(&table, cfg)?;
    write_csv(&sibling(out_path, "csv"), &report.rows)?;
    write_json(&sibling(out_path, "json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    pub design: String,
    pub model: String,
    /// Cells per subject for designs A and B.
    pub n_cells: Option<usize>,
    pub rounds: usize,
    pub n_perm: usize,
    pub alpha: f64,
    pub seed: u64,
    pub record_timing: bool,
}

/// Flat CSV form of a [`SimReport`].
#[derive(Debug, Serialize)]
struct SimRow<'a> {
    design: String,
    model: &'a str,
    n_cells: Option<usize>,
    rounds: usize,
    failed_rounds: usize,
    valid: bool,
    n_perm: usize,
    alpha: f64,
    seed: u64,
    rejection_rate_mixing: f64,
    rejection_rate_smoothed: f64,
    mean_converged_fraction: f64,
}

/// Runs a power study and writes `<out>.json` and `<out>.csv`.
pub fn run_simulate_command(args: &SimulateArgs, out_path: &Path) -> Result<SimReport> {
    let design = DesignSpec::from_id(&args.design, args.n_cells)?;
    let (m0, m1) = model_pair(&args.model)?;
    let cfg = StudyConfig::new(args.rounds, args.n_perm, args.alpha, args.seed);
    let started = Instant::now();
    let mut report = run_power_study(&design, &m0, &m1, &cfg)?;
    report.model = Some(args.model.to_ascii_lowercase());
    report.wall_time_secs = args.record_timing.then(|| started.elapsed().as_secs_f64());
    write_json(&sibling(out_path, "json"), &report)?;
    let row = SimRow {
        design: report.design.to_string(),
        model: report.model.as_deref().unwrap_or(""),
        n_cells: args.n_cells.filter(|_| design.kind != crate::simulate::DesignKind::C),
        rounds: report.rounds,
        failed_rounds: report.failed_rounds,
        valid: report.valid,
        n_perm: report.n_perm,
        alpha: report.alpha,
        seed: report.seed,
        rejection_rate_mixing: report.rejection_rate_mixing,
        rejection_rate_smoothed: report.rejection_rate_smoothed,
        mean_converged_fraction: report.mean_converged_fraction,
    };
    write_csv(&sibling(out_path, "csv"), &[row])?;
    Ok(report)
}

/// Converts a simulated data set into a long table with one gene.
pub fn dataset_table(gene: &str, data: &crate::simulate::Dataset) -> CountTable {
    let width = data.samples.len().to_string().len();
    let mut g = GeneData {
        subjects: Vec::new(),
        groups: Vec::new(),
        counts: Vec::new(),
        read_depths: Vec::new(),
    };
    for (i, s) in data.samples.iter().enumerate() {
        g.subjects.push(format!("s{i:0width$}"));
        g.groups.push(format!("g{}", data.layout.group_of()[i] + 1));
        g.counts.push(s.counts().to_vec());
        g.read_depths.push(s.read_depths().to_vec());
    }
    BTreeMap::from([(gene.to_string(), g)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bound_rule() {
        let cfg = RunConfig::default();
        assert_eq!(select_bound(&[0.0; 10], &cfg).unwrap(), 5.0);
        assert_eq!(select_bound(&[3.0; 10], &cfg).unwrap(), 5.0);
        assert_eq!(select_bound(&[15.09; 4], &cfg).unwrap(), 25.0);
        let fixed = RunConfig {
            b: Some(20.0),
            ..RunConfig::default()
        };
        assert_eq!(select_bound(&[15.09; 4], &fixed).unwrap(), 20.0);
        assert!(select_bound(&[], &cfg).is_err());
    }

    #[test]
    fn type7_quantile() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_abs_diff_eq!(quantile_type7(&v, 0.5), 3.0);
        assert_abs_diff_eq!(quantile_type7(&v, 0.99), 4.96, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile_type7(&[7.0], 0.3), 7.0);
    }

    fn ingest(text: &str) -> Result<CountTable> {
        ingest_counts_from(text.as_bytes(), TableFormat::Csv)
    }

    #[test]
    fn ingest_groups_and_orders() {
        let t = ingest("gene,subject,group,count,read_depth\ng,b,y,1,1\ng,a,x,2,0.5\ng,b,y,3,1\n").unwrap();
        let g = &t["g"];
        assert_eq!(g.subjects, vec!["a", "b"]);
        assert_eq!(g.counts, vec![vec![2], vec![1, 3]]);
        assert_eq!(g.layout().unwrap().group_of(), &[0, 1]);
    }

    #[test]
    fn ingest_errors_have_lines() {
        let header = "gene,subject,group,count,read_depth\n";
        let cases = [
            format!("{header}g,a,x,1,1\ng,a,y,1,1\n"),
            format!("{header}g,a,x,1.5,1\n"),
            format!("{header}g,a,x,1,0\n"),
            format!("{header}g,a,x,-1,1\n"),
        ];
        let lines = [3, 2, 2, 2];
        for (c, want) in cases.iter().zip(lines) {
            match ingest(c) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{c}"),
                other => panic!("expected parse error, got {other:?}"),
            }
        }
        assert!(matches!(
            ingest("gene,subject,group,count\ng,a,x,1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ingest("gene,subject,group,count,read_depth,gene\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn distance_kind_parses() {
        assert_eq!("both".parse::<DistanceKind>().unwrap(), DistanceKind::Both);
        assert!("plain".parse::<DistanceKind>().is_err());
    }
}
