//! Simulation designs and population models for size and power studies.
//!
//! A subject's mixing distribution is a truncated Gamma `Gam(a + D, b; B)`
//! whose shape is jittered by `D ~ Uniform(-1, 1)` once per subject; draws
//! above `B` are clamped to `B`. Cells then follow
//! `X ~ Poisson(r * lambda)` with `lambda` drawn from the subject's
//! distribution and `r` given by the design's read-depth rule.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::anova::{distance_matrix, permutation_test, StudyLayout};
use crate::error::{Error, Result};
use crate::likelihood::CountSample;
use crate::measures::{poisson_smooth, w1_measures, w1_pmfs, DiscreteMeasure};
use crate::rng::{child_seed, stream, StreamRng};
use crate::solvers::{fit, SolverConfig};

/// Per-subject cell counts `N_jk` of the unbalanced design, group 1.
pub const DESIGN_C_CELLS_GROUP1: [usize; 10] = [388, 1142, 162, 391, 215, 278, 284, 193, 542, 106];
/// Per-subject cell counts `N_jk` of the unbalanced design, group 2.
pub const DESIGN_C_CELLS_GROUP2: [usize; 13] = [202, 759, 415, 69, 327, 431, 414, 451, 275, 733, 422, 65, 362];

pub const MODEL_IDS: [&str; 12] = [
    "1a", "1b", "1c", "2a", "2b", "2c", "3a", "3b", "3c", "4a", "4b", "4c",
];

/// Truncation tolerance for Poisson-smoothed distances in simulations.
pub const SIM_TAIL_TOL: f64 = 1e-8;
/// Atoms per discretised mixing distribution in [`signal_strength`].
pub const SIGNAL_ATOMS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    A,
    B,
    C,
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadDepthRule {
    AllOnes,
    /// One `Uniform(0.5, 1.5)` vector shared by every subject.
    SharedUniform,
    /// Independent `Uniform(0.5, 1.5)` per cell.
    IidUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub group_sizes: Vec<usize>,
    /// Cells per subject, subjects ordered group by group.
    pub cells: Vec<usize>,
    pub read_depth_rule: ReadDepthRule,
}

impl DesignSpec {
    /// Balanced, `n_1 = n_2 = 10`, all read depths 1.
    pub fn design_a(n_cells: usize) -> Self {
        Self {
            kind: DesignKind::A,
            group_sizes: vec![10, 10],
            cells: vec![n_cells; 20],
            read_depth_rule: ReadDepthRule::AllOnes,
        }
    }

    /// Balanced, `n_1 = n_2 = 10`, one shared uniform read-depth vector.
    pub fn design_b(n_cells: usize) -> Self {
        Self {
            kind: DesignKind::B,
            group_sizes: vec![10, 10],
            cells: vec![n_cells; 20],
            read_depth_rule: ReadDepthRule::SharedUniform,
        }
    }

    /// Unbalanced `n_1 = 10`, `n_2 = 13` with the fixed cell counts of
    /// [`DESIGN_C_CELLS_GROUP1`] and [`DESIGN_C_CELLS_GROUP2`], iid uniform read depths.
    pub fn design_c() -> Self {
        Self {
            kind: DesignKind::C,
            group_sizes: vec![10, 13],
            cells: DESIGN_C_CELLS_GROUP1.iter().chain(&DESIGN_C_CELLS_GROUP2).copied().collect(),
            read_depth_rule: ReadDepthRule::IidUniform,
        }
    }

    /// `n_cells` is required for designs A and B and ignored for C.
    pub fn from_id(id: &str, n_cells: Option<usize>) -> Result<Self> {
        let need = || {
            n_cells.filter(|&n| n > 0).ok_or_else(|| {
                Error::Config(format!("design {id} needs a positive number of cells per subject"))
            })
        };
        match id.to_ascii_uppercase().as_str() {
            "A" => Ok(Self::design_a(need()?)),
            "B" => Ok(Self::design_b(need()?)),
            "C" => Ok(Self::design_c()),
            _ => Err(Error::Config(format!("unknown design {id:?}; valid designs: A, B, C"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n: usize = self.group_sizes.iter().sum();
        if self.group_sizes.len() != 2 || self.group_sizes.contains(&0) {
            return Err(Error::Config("designs have two nonempty groups".into()));
        }
        if self.cells.len() != n || self.cells.contains(&0) {
            return Err(Error::Config("every subject needs at least one cell".into()));
        }
        let expected = match self.kind {
            DesignKind::A => ReadDepthRule::AllOnes,
            DesignKind::B => ReadDepthRule::SharedUniform,
            DesignKind::C => ReadDepthRule::IidUniform,
        };
        if self.read_depth_rule != expected {
            return Err(Error::Config(format!(
                "design {} uses {:?} read depths",
                self.kind, expected
            )));
        }
        if self.kind == DesignKind::B && self.cells.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Config("design B needs equal cell counts".into()));
        }
        Ok(())
    }

    pub fn n_subjects(&self) -> usize {
        self.cells.len()
    }
}

/// Population model of one group: `Gam(shape_base + D, rate; bound)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub shape_base: f64,
    pub rate: f64,
    pub bound: f64,
}

impl ModelSpec {
    pub fn new(shape_base: f64, rate: f64, bound: f64) -> Result<Self> {
        let m = Self {
            shape_base,
            rate,
            bound,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape_base >= 1.0 && self.shape_base.is_finite()) {
            return Err(Error::Config(format!(
                "shape {} must be at least 1 so the jittered shape stays positive",
                self.shape_base
            )));
        }
        if !(self.rate > 0.0 && self.rate.is_finite() && self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::Config("rate and bound must be positive".into()));
        }
        Ok(())
    }
}

/// The `(group 1, group 2)` models for ids `1a` through `4c`.
pub fn model_pair(id: &str) -> Result<(ModelSpec, ModelSpec)> {
    let m = |a: f64, b: f64, bound: f64| ModelSpec {
        shape_base: a,
        rate: b,
        bound,
    };
    let pair = match id.to_ascii_lowercase().as_str() {
        "1a" => (m(14.0, 1.75, 50.0), m(14.0, 1.75, 50.0)),
        "1b" => (m(14.0, 7.0, 50.0), m(14.0, 7.0, 50.0)),
        "1c" => (m(6.0, 1.0, 50.0), m(6.0, 1.0, 50.0)),
        "2a" => (m(14.0, 1.75, 50.0), m(6.0, 0.75, 50.0)),
        "2b" => (m(14.0, 7.0 / 3.0, 50.0), m(6.0, 1.0, 50.0)),
        "2c" => (m(14.0, 3.5, 50.0), m(6.0, 1.5, 50.0)),
        "3a" => (m(4.0, 1.0, 20.0), m(5.0, 1.0, 20.0)),
        "3b" => (m(5.0, 1.0, 20.0), m(6.0, 1.0, 20.0)),
        "3c" => (m(6.0, 1.0, 20.0), m(7.0, 1.0, 20.0)),
        "4a" => (m(11.0, 1.0, 50.0), m(12.0, 1.0, 50.0)),
        "4b" => (m(12.0, 1.0, 50.0), m(13.0, 1.0, 50.0)),
        "4c" => (m(13.0, 1.0, 50.0), m(14.0, 1.0, 50.0)),
        _ => {
            return Err(Error::Config(format!(
                "unknown model {id:?}; valid models: {}",
                MODEL_IDS.join(", ")
            )))
        }
    };
    Ok(pair)
}

/// One subject's mixing distribution `Gam(shape, rate)` clamped at `bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectMixing {
    pub shape: f64,
    pub rate: f64,
    pub bound: f64,
}

impl SubjectMixing {
    pub fn sampler(&self) -> Result<impl Fn(&mut StreamRng) -> f64> {
        let gamma = Gamma::new(self.shape, 1.0 / self.rate)
            .map_err(|e| Error::domain(format!("invalid Gamma parameters: {e}")))?;
        let bound = self.bound;
        Ok(move |rng: &mut StreamRng| gamma.sample(rng).min(bound))
    }

    /// Quantile of the clamped distribution at level `p`.
    pub fn quantile(&self, p: f64) -> f64 {
        (gamma_quantile(self.shape, p) / self.rate).min(self.bound)
    }

    /// `atoms`-point discretisation at the quantile midpoints
    /// `(i + 1/2) / atoms`, equally weighted.
    pub fn discretize(&self, atoms: usize) -> Result<DiscreteMeasure> {
        let support: Vec<f64> = (0..atoms)
            .map(|i| self.quantile((i as f64 + 0.5) / atoms as f64))
            .collect();
        DiscreteMeasure::new(support, vec![1.0; atoms], self.bound)
    }

    pub fn mean_unclamped(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Quantile of the unit-rate Gamma distribution with the given shape:
/// Newton steps on the regularised incomplete gamma function, safeguarded by
/// bisection, from a Wilson-Hilferty start.
fn gamma_quantile(shape: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let z = Normal::standard().inverse_cdf(p);
    let c = 1.0 / (9.0 * shape);
    let mut x = (shape * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-3 * shape);
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let ln_g = ln_gamma(shape);
    for _ in 0..100 {
        let f = gamma_lr(shape, x) - p;
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let ln_pdf = (shape - 1.0) * x.ln() - x - ln_g;
        let mut next = x - f / ln_pdf.exp();
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(lo) };
        }
        if (next - x).abs() <= 1e-13 * x {
            return next;
        }
        x = next;
    }
    x
}

/// Draws the subject-level jitter and returns its mixing distribution.
pub fn draw_subject_mixing<R: Rng + ?Sized>(m: &ModelSpec, rng: &mut R) -> SubjectMixing {
    let jitter: f64 = rng.sample(Uniform::new(-1.0, 1.0).expect("valid range"));
    SubjectMixing {
        shape: m.shape_base + jitter,
        rate: m.rate,
        bound: m.bound,
    }
}

/// A simulated two-group data set.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub layout: StudyLayout,
    pub samples: Vec<CountSample>,
    pub mixings: Vec<SubjectMixing>,
}

fn poisson_draw(mean: f64, rng: &mut StreamRng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite mean");
    let x: f64 = p.sample(rng);
    x as u64
}

/// Generates one data set; `m0` drives group 1 and `m1` group 2.
pub fn generate_dataset(d: &DesignSpec, m0: &ModelSpec, m1: &ModelSpec, seed: u64) -> Result<Dataset> {
    d.validate()?;
    m0.validate()?;
    m1.validate()?;
    if m0.bound != m1.bound {
        return Err(Error::Config("both groups must share the support bound".into()));
    }
    let mut rng = stream(seed, 0);
    let depth = Uniform::new(0.5, 1.5).expect("valid range");
    let shared: Vec<f64> = match d.read_depth_rule {
        ReadDepthRule::SharedUniform => (0..d.cells[0]).map(|_| rng.sample(depth)).collect(),
        _ => Vec::new(),
    };
    let layout = StudyLayout::from_sizes(&d.group_sizes)?;
    let mut samples = Vec::with_capacity(d.n_subjects());
    let mut mixings = Vec::with_capacity(d.n_subjects());
    for (subject, &n_cells) in d.cells.iter().enumerate() {
        let model = if layout.group_of()[subject] == 0 { m0 } else { m1 };
        let mixing = draw_subject_mixing(model, &mut rng);
        let draw_lambda = mixing.sampler()?;
        let mut counts = Vec::with_capacity(n_cells);
        let mut depths = Vec::with_capacity(n_cells);
        // draws stay interleaved per cell, so the index loop is kept
        #[allow(clippy::needless_range_loop)]
        for i in 0..n_cells {
            let lambda = draw_lambda(&mut rng);
            let r = match d.read_depth_rule {
                ReadDepthRule::AllOnes => 1.0,
                ReadDepthRule::SharedUniform => shared[i],
                ReadDepthRule::IidUniform => rng.sample(depth),
            };
            counts.push(poisson_draw(r * lambda, &mut rng));
            depths.push(r);
        }
        samples.push(CountSample::new(counts, depths, model.bound)?);
        mixings.push(mixing);
    }
    Ok(Dataset {
        layout,
        samples,
        mixings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub rounds: usize,
    pub n_perm: usize,
    pub alpha: f64,
    pub seed: u64,
    pub solver: SolverConfig,
    pub tail_tol: f64,
}

impl StudyConfig {
    pub fn new(rounds: usize, n_perm: usize, alpha: f64, seed: u64) -> Self {
        Self {
            rounds,
            n_perm,
            alpha,
            seed,
            solver: SolverConfig::default(),
            tail_tol: SIM_TAIL_TOL,
        }
    }
}

/// Outcome of one simulated round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub p_mixing: f64,
    pub p_smoothed: f64,
    pub converged_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub design: DesignKind,
    pub model: Option<String>,
    pub rounds: usize,
    pub failed_rounds: usize,
    /// False when more than 1% of rounds failed.
    pub valid: bool,
    pub n_perm: usize,
    pub alpha: f64,
    pub seed: u64,
    pub rejection_rate_mixing: f64,
    pub rejection_rate_smoothed: f64,
    pub mean_converged_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_secs: Option<f64>,
}

/// Runs one round: simulate, fit every subject, build both distance
/// matrices and run both permutation tests.
pub fn run_round(
    d: &DesignSpec,
    m0: &ModelSpec,
    m1: &ModelSpec,
    cfg: &StudyConfig,
    round: u64,
) -> Result<RoundOutcome> {
    let data = generate_dataset(d, m0, m1, child_seed(cfg.seed, round, 0))?;
    let fits = data
        .samples
        .iter()
        .map(|s| fit(s, &cfg.solver))
        .collect::<Result<Vec<_>>>()?;
    let converged = fits.iter().filter(|f| f.converged).count() as f64 / fits.len() as f64;
    let estimates: Vec<DiscreteMeasure> = fits.into_iter().map(|f| f.estimate).collect();
    let test_seed = child_seed(cfg.seed, round, 1);
    let mixing = distance_matrix(&estimates, false, cfg.tail_tol)?;
    let smoothed = distance_matrix(&estimates, true, cfg.tail_tol)?;
    let alphas = [cfg.alpha];
    let t_mix = permutation_test(&mixing, &data.layout, cfg.n_perm, test_seed, &alphas)?;
    let t_smooth = permutation_test(&smoothed, &data.layout, cfg.n_perm, test_seed, &alphas)?;
    Ok(RoundOutcome {
        p_mixing: t_mix.p_value,
        p_smoothed: t_smooth.p_value,
        converged_fraction: converged,
    })
}

/// Empirical rejection rates of both tests over `cfg.rounds` simulated data
/// sets. Failed rounds are logged and excluded.
pub fn run_power_study(
    d: &DesignSpec,
    m0: &ModelSpec,
    m1: &ModelSpec,
    cfg: &StudyConfig,
) -> Result<SimReport> {
    if cfg.rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    if cfg.n_perm == 0 {
        return Err(Error::Config("n_perm must be at least 1".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
        return Err(Error::Config(format!("alpha {} outside (0, 1]", cfg.alpha)));
    }
    d.validate()?;
    let started = Instant::now();
    let outcomes: Vec<Result<RoundOutcome>> = (0..cfg.rounds as u64)
        .into_par_iter()
        .map(|r| run_round(d, m0, m1, cfg, r))
        .collect();
    let mut ok = Vec::with_capacity(outcomes.len());
    let mut failed = 0;
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => {
                log::warn!("round {r} failed: {e}");
                failed += 1;
            }
        }
    }
    let valid = (failed as f64) <= 0.01 * cfg.rounds as f64 && !ok.is_empty();
    let denom = ok.len().max(1) as f64;
    let rate = |p: fn(&RoundOutcome) -> f64| {
        ok.iter().filter(|o| p(o) <= cfg.alpha).count() as f64 / denom
    };
    Ok(SimReport {
        design: d.kind,
        model: None,
        rounds: cfg.rounds,
        failed_rounds: failed,
        valid,
        n_perm: cfg.n_perm,
        alpha: cfg.alpha,
        seed: cfg.seed,
        rejection_rate_mixing: rate(|o| o.p_mixing),
        rejection_rate_smoothed: rate(|o| o.p_smoothed),
        mean_converged_fraction: ok.iter().map(|o| o.converged_fraction).sum::<f64>() / denom,
        wall_time_secs: Some(started.elapsed().as_secs_f64()),
    })
}

/// Monte Carlo estimates of the between-minus-within signal strengths for
/// the mixing distributions (`d`) and their Poisson smoothings (`d_h`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalStrength {
    pub d: f64,
    pub d_h: f64,
    pub se_d: f64,
    pub se_d_h: f64,
    pub mc_reps: usize,
    pub seed: u64,
}

/// Each replicate draws two subjects per group, discretises their mixing
/// distributions at [`SIGNAL_ATOMS`] quantile midpoints, and contrasts the
/// between-group squared W1 with the average within-group one.
pub fn signal_strength(m0: &ModelSpec, m1: &ModelSpec, mc_reps: usize, seed: u64) -> Result<SignalStrength> {
    if mc_reps < 100 {
        return Err(Error::Config(format!("mc_reps must be at least 100, got {mc_reps}")));
    }
    m0.validate()?;
    m1.validate()?;
    let reps: Vec<Result<(f64, f64)>> = (0..mc_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(seed, rep);
            let a1 = draw_subject_mixing(m0, &mut rng).discretize(SIGNAL_ATOMS)?;
            let a2 = draw_subject_mixing(m0, &mut rng).discretize(SIGNAL_ATOMS)?;
            let b1 = draw_subject_mixing(m1, &mut rng).discretize(SIGNAL_ATOMS)?;
            let b2 = draw_subject_mixing(m1, &mut rng).discretize(SIGNAL_ATOMS)?;
            let sq = |x: f64| x * x;
            let d = sq(w1_measures(&a1, &b1))
                - 0.5 * (sq(w1_measures(&a1, &a2)) + sq(w1_measures(&b1, &b2)));
            let [ha1, ha2, hb1, hb2] = [&a1, &a2, &b1, &b2].map(|g| poisson_smooth(g, SIM_TAIL_TOL));
            let (ha1, ha2, hb1, hb2) = (ha1?, ha2?, hb1?, hb2?);
            let d_h = sq(w1_pmfs(&ha1, &hb1)) - 0.5 * (sq(w1_pmfs(&ha1, &ha2)) + sq(w1_pmfs(&hb1, &hb2)));
            Ok((d, d_h))
        })
        .collect();
    let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
    let mean_se = |v: Vec<f64>| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    let (d, se_d) = mean_se(reps.iter().map(|r| r.0).collect());
    let (d_h, se_d_h) = mean_se(reps.iter().map(|r| r.1).collect());
    Ok(SignalStrength {
        d,
        d_h,
        se_d,
        se_d_h,
        mc_reps,
        seed,
    })
}
