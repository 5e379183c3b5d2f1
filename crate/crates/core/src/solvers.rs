//! NPMLE of a Poisson mixing distribution on `[0, B]` with known read depths.
//!
//! Three vertex-type algorithms share the same skeleton: starting from a point
//! mass, find where the directional derivative `phi'(G, delta_lambda)` peaks,
//! stop once that peak is below `stop_tol`, otherwise move mass towards the
//! peak(s) with an exact line search on the concave objective.
//!
//! * VDM mixes the current iterate with the single best point mass.
//! * VEM moves the mass of the worst support point to the best point,
//!   falling back to a VDM step when that exchange does not raise `phi`.
//! * ISDM re-weights the current iterate together with every local maximum of
//!   `phi'`, solving the simplex sub-problem with EM fixed-point updates.
//!
//! The directional derivative is searched on a uniform grid followed by
//! golden-section refinement around the best grid maxima. All searches run on
//! `ln(1 + phi')`, which is monotone in `phi'` and cannot overflow.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{
    log_kernel, log_mixture, log_ratio_mean, log_sum_exp, phi_from_log_mixture,
    phi_prime_from_log, search_grid, CountSample,
};
use crate::measures::{check_same_bound, point_mass, DiscreteMeasure};
use crate::optim::golden_max;

const LINE_SEARCH_TOL: f64 = 1e-8;
const REFINE_REL_TOL: f64 = 1e-10;
/// Grid maxima refined when looking for the global maximiser.
const REFINED_CANDIDATES: usize = 3;
const ISDM_EM_TOL: f64 = 1e-10;
const ISDM_EM_MAX_ITERS: usize = 500;
/// Adjacent atoms closer than this fraction of `B` are merge candidates.
const COMPACT_REL_GAP: f64 = 0.05;
const COMPACT_EM_ITERS: usize = 100;
const MAX_COMPACTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Vdm,
    Vem,
    Isdm,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Vdm => "vdm",
            Algorithm::Vem => "vem",
            Algorithm::Isdm => "isdm",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vdm" => Ok(Algorithm::Vdm),
            "vem" => Ok(Algorithm::Vem),
            "isdm" => Ok(Algorithm::Isdm),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?}; expected one of vdm, vem, isdm"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Stop once `max_lambda phi'(G, delta_lambda) <= stop_tol`.
    pub stop_tol: f64,
    pub max_iters: usize,
    pub grid_size: usize,
    /// Golden-section refinement of grid maxima.
    pub refine: bool,
    pub weight_floor: f64,
    /// On convergence, merge nearby atoms and drop light ones when that does
    /// not lower `phi`.
    pub compact: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Vem,
            stop_tol: 0.01,
            max_iters: 2000,
            grid_size: 1000,
            refine: true,
            weight_floor: 1e-12,
            compact: true,
        }
    }
}

impl SolverConfig {
    pub fn with_algorithm(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stop_tol > 0.0 && self.stop_tol.is_finite()) {
            return Err(Error::Config(format!("stop_tol must be positive, got {}", self.stop_tol)));
        }
        if self.grid_size < 10 {
            return Err(Error::Config(format!("grid_size must be at least 10, got {}", self.grid_size)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor < 1.0) {
            return Err(Error::Config(format!("weight_floor {} outside [0, 1)", self.weight_floor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimate: DiscreteMeasure,
    /// `phi` of every iterate, starting with the initial point mass.
    pub phi_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_phi_prime_at_exit: f64,
}

impl FitResult {
    pub fn phi(&self) -> f64 {
        self.phi_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

/// Current iterate with cached per-observation log mixture densities.
#[derive(Debug, Clone)]
struct Iterate {
    atoms: Vec<(f64, f64)>,
    log_mix: Vec<f64>,
    phi: f64,
}

impl Iterate {
    fn from_atoms(mut atoms: Vec<(f64, f64)>, s: &CountSample, cfg: &SolverConfig) -> Result<Self> {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let g = DiscreteMeasure::from_sorted_atoms(atoms, s.bound(), cfg.weight_floor)?;
        Ok(Self::from_measure(&g, s))
    }

    fn from_measure(g: &DiscreteMeasure, s: &CountSample) -> Self {
        let atoms: Vec<(f64, f64)> = g.atoms().collect();
        let log_mix = log_mixture(&atoms, s);
        let phi = phi_from_log_mixture(&log_mix, s);
        Self {
            atoms,
            log_mix,
            phi,
        }
    }

    fn to_measure(&self, bound: f64) -> Result<DiscreteMeasure> {
        DiscreteMeasure::from_sorted_atoms(self.atoms.clone(), bound, 0.0)
    }

    fn psi(&self, lambda: f64, s: &CountSample) -> f64 {
        log_ratio_mean(lambda, &self.log_mix, s)
    }
}

/// A candidate direction: `psi = ln(1 + phi'(G, delta_lambda))`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Direction {
    lambda: f64,
    psi: f64,
}

/// Grid local maxima, endpoints included, in increasing `lambda`.
fn grid_local_maxima(it: &Iterate, s: &CountSample, cfg: &SolverConfig) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let grid = search_grid(s, cfg.grid_size);
    let vals: Vec<f64> = grid.iter().map(|&l| it.psi(l, s)).collect();
    let n = grid.len();
    let mut peaks = Vec::new();
    for j in 0..n {
        let left_ok = j == 0 || vals[j] > vals[j - 1];
        let right_ok = j + 1 == n || vals[j] > vals[j + 1];
        if left_ok && right_ok {
            peaks.push(j);
        }
    }
    if peaks.is_empty() {
        // Entirely flat: the first global maximiser.
        let mut best = 0;
        for j in 1..n {
            if vals[j] > vals[best] {
                best = j;
            }
        }
        peaks.push(best);
    }
    (grid, vals, peaks)
}

fn refine_peak(
    it: &Iterate,
    s: &CountSample,
    cfg: &SolverConfig,
    grid: &[f64],
    vals: &[f64],
    j: usize,
) -> Direction {
    let coarse = Direction {
        lambda: grid[j],
        psi: vals[j],
    };
    if !cfg.refine {
        return coarse;
    }
    let lo = if j == 0 { grid[0] } else { grid[j - 1] };
    let hi = if j + 1 == grid.len() { grid[j] } else { grid[j + 1] };
    let (lambda, psi) = golden_max(|l| it.psi(l, s), lo, hi, REFINE_REL_TOL * s.bound());
    if psi > coarse.psi {
        Direction { lambda, psi }
    } else {
        coarse
    }
}

fn better(a: Direction, b: Direction) -> Direction {
    // smallest lambda wins exact ties
    if b.psi > a.psi || (b.psi == a.psi && b.lambda < a.lambda) {
        b
    } else {
        a
    }
}

/// Approximate global maximiser of `phi'(G, .)` over `[0, B]`.
fn search_max(it: &Iterate, s: &CountSample, cfg: &SolverConfig) -> Direction {
    let (grid, vals, mut peaks) = grid_local_maxima(it, s, cfg);
    peaks.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    peaks.truncate(REFINED_CANDIDATES);
    peaks
        .into_iter()
        .map(|j| refine_peak(it, s, cfg, &grid, &vals, j))
        .reduce(better)
        .expect("at least one grid peak")
}

/// Every local maximiser of `phi'(G, .)`, each refined.
fn search_all_maxima(it: &Iterate, s: &CountSample, cfg: &SolverConfig) -> Vec<Direction> {
    let (grid, vals, peaks) = grid_local_maxima(it, s, cfg);
    peaks
        .into_iter()
        .map(|j| refine_peak(it, s, cfg, &grid, &vals, j))
        .collect()
}

fn log_kernels(lambda: f64, s: &CountSample) -> Vec<f64> {
    let ll = lambda.ln();
    s.unique().iter().map(|o| log_kernel(lambda, ll, o)).collect()
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn weighted_phi(values: impl Iterator<Item = f64>, s: &CountSample) -> f64 {
    let mut total = 0.0;
    for (v, o) in values.zip(s.unique()) {
        if v == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += o.mult * v;
    }
    total / s.total_weight()
}

/// Keeps `candidate` only if it does not decrease `phi`.
fn accept(old: &Iterate, candidate: Iterate) -> Iterate {
    if candidate.phi >= old.phi {
        candidate
    } else {
        old.clone()
    }
}

fn vdm_line_search(it: &Iterate, dir: Direction, s: &CountSample) -> f64 {
    let lk = log_kernels(dir.lambda, s);
    let phi_at = |alpha: f64| {
        let (la, lb) = ((1.0 - alpha).ln(), alpha.ln());
        weighted_phi(
            it.log_mix
                .iter()
                .zip(&lk)
                .map(|(&m, &k)| log_add_exp(la + m, lb + k)),
            s,
        )
    };
    golden_max(phi_at, 0.0, 1.0, LINE_SEARCH_TOL).0
}

fn vdm_move(it: &Iterate, dir: Direction, s: &CountSample, cfg: &SolverConfig) -> Result<Iterate> {
    let alpha = vdm_line_search(it, dir, s);
    if alpha == 0.0 {
        return Ok(it.clone());
    }
    let mut atoms: Vec<(f64, f64)> = it.atoms.iter().map(|&(l, w)| (l, (1.0 - alpha) * w)).collect();
    atoms.push((dir.lambda, alpha));
    Ok(accept(it, Iterate::from_atoms(atoms, s, cfg)?))
}

fn vem_move(it: &Iterate, dir: Direction, s: &CountSample, cfg: &SolverConfig) -> Result<Iterate> {
    // worst support point; smallest lambda on ties
    let (min_idx, _) = it
        .atoms
        .iter()
        .enumerate()
        .map(|(m, &(l, _))| (m, it.psi(l, s)))
        .fold((usize::MAX, f64::INFINITY), |acc, (m, v)| if v < acc.1 { (m, v) } else { acc });
    let (lambda_min, w_min) = it.atoms[min_idx];
    if lambda_min == dir.lambda {
        return vdm_move(it, dir, s, cfg);
    }
    let ln_w = w_min.ln();
    let lk_min = log_kernels(lambda_min, s);
    let lk_max = log_kernels(dir.lambda, s);
    let phi_at = |alpha: f64| {
        let la = alpha.ln();
        weighted_phi(
            it.log_mix
                .iter()
                .zip(lk_min.iter().zip(&lk_max))
                .map(|(&m, (&kmin, &kmax))| {
                    // ln(mix - alpha w k_min), where mix >= w k_min
                    let removed = alpha * (ln_w + kmin - m).exp();
                    let rest = if removed >= 1.0 {
                        f64::NEG_INFINITY
                    } else {
                        m + (-removed).ln_1p()
                    };
                    log_add_exp(rest, la + ln_w + kmax)
                }),
            s,
        )
    };
    let (alpha, _) = golden_max(phi_at, 0.0, 1.0, LINE_SEARCH_TOL);
    if alpha > 0.0 {
        let moved = alpha * w_min;
        let mut atoms = it.atoms.clone();
        atoms[min_idx].1 = if alpha == 1.0 { 0.0 } else { w_min - moved };
        atoms.push((dir.lambda, moved));
        let candidate = Iterate::from_atoms(atoms, s, cfg)?;
        if candidate.phi > it.phi {
            return Ok(candidate);
        }
    }
    // The exchange cannot improve when the worst atom carries negligible
    // mass; a vertex-direction step still can while phi' > 0.
    vdm_move(it, dir, s, cfg)
}

/// Maximises `phi(a_0 G + sum_c a_c delta_c)` over the simplex by EM,
/// starting from `init`. Returns the weights.
fn simplex_em(component_logs: &[Vec<f64>], init: Vec<f64>, s: &CountSample, max_iters: usize) -> Vec<f64> {
    let k = component_logs.len();
    let n = s.total_weight();
    let mut alpha = init;
    let mut resp = vec![0.0; k];
    for _ in 0..max_iters {
        let ln_alpha: Vec<f64> = alpha.iter().map(|a| a.ln()).collect();
        let mut next = vec![0.0; k];
        for (i, o) in s.unique().iter().enumerate() {
            let terms = (0..k).map(|c| ln_alpha[c] + component_logs[c][i]);
            let lm = log_sum_exp(terms.clone());
            if !lm.is_finite() {
                continue;
            }
            for (c, t) in terms.enumerate() {
                resp[c] = (t - lm).exp();
            }
            for c in 0..k {
                next[c] += o.mult * resp[c];
            }
        }
        let mut change: f64 = 0.0;
        for c in 0..k {
            next[c] /= n;
            change = change.max((next[c] - alpha[c]).abs());
        }
        alpha = next;
        if change < ISDM_EM_TOL {
            break;
        }
    }
    alpha
}

fn isdm_move(it: &Iterate, s: &CountSample, cfg: &SolverConfig) -> Result<Iterate> {
    let maxima = search_all_maxima(it, s, cfg);
    let best = maxima
        .iter()
        .copied()
        .reduce(better)
        .expect("at least one local maximum");
    // The simplex optimum is at least as good as the best single-direction
    // move, so that move seeds EM and serves as the fallback.
    let vdm = vdm_move(it, best, s, cfg)?;

    let mut component_logs = Vec::with_capacity(maxima.len() + 1);
    component_logs.push(it.log_mix.clone());
    for d in &maxima {
        component_logs.push(log_kernels(d.lambda, s));
    }
    let vdm_alpha = vdm_line_search(it, best, s);
    let k = maxima.len() + 1;
    let mut init = vec![0.0; k];
    init[0] = 1.0 - vdm_alpha;
    if let Some(pos) = maxima.iter().position(|d| *d == best) {
        init[pos + 1] = vdm_alpha;
    }
    for a in &mut init {
        *a = 0.9 * *a + 0.1 / k as f64;
    }
    let alpha = simplex_em(&component_logs, init, s, ISDM_EM_MAX_ITERS);

    let mut atoms: Vec<(f64, f64)> = it.atoms.iter().map(|&(l, w)| (l, alpha[0] * w)).collect();
    for (d, &a) in maxima.iter().zip(&alpha[1..]) {
        atoms.push((d.lambda, a));
    }
    let em = Iterate::from_atoms(atoms, s, cfg)?;
    let candidate = if em.phi >= vdm.phi { em } else { vdm };
    Ok(accept(it, candidate))
}

fn step(it: &Iterate, dir: Direction, s: &CountSample, cfg: &SolverConfig) -> Result<Iterate> {
    match cfg.algorithm {
        Algorithm::Vdm => vdm_move(it, dir, s, cfg),
        Algorithm::Vem => vem_move(it, dir, s, cfg),
        Algorithm::Isdm => isdm_move(it, s, cfg),
    }
}

/// Replaces atoms `i..=j` by one atom carrying their mass, placed by a
/// golden-section search between them, optionally followed by EM
/// re-weighting. Returns the result only if `phi` does not decrease.
fn merge_range(
    it: &Iterate,
    i: usize,
    j: usize,
    em_iters: usize,
    s: &CountSample,
    cfg: &SolverConfig,
) -> Result<Option<Iterate>> {
    let w: f64 = it.atoms[i..=j].iter().map(|a| a.1).sum();
    let (lo, hi) = (it.atoms[i].0, it.atoms[j].0);
    let mut atoms: Vec<(f64, f64)> = it.atoms[..i].iter().chain(&it.atoms[j + 1..]).copied().collect();
    let rest_log = if atoms.is_empty() {
        vec![f64::NEG_INFINITY; s.unique().len()]
    } else {
        log_mixture(&atoms, s)
    };
    let ln_w = w.ln();
    let n = s.total_weight();
    let objective = |lambda: f64| {
        let ln_l = lambda.ln();
        s.unique()
            .iter()
            .zip(&rest_log)
            .map(|(o, &r)| o.mult * log_sum_exp([r, ln_w + log_kernel(lambda, ln_l, o)].into_iter()))
            .sum::<f64>()
            / n
    };
    let (lambda, _) = golden_max(objective, lo, hi, LINE_SEARCH_TOL * s.bound());
    atoms.push((lambda, w));
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    if em_iters > 0 {
        let component_logs: Vec<Vec<f64>> = atoms.iter().map(|&(l, _)| log_kernels(l, s)).collect();
        let weights = simplex_em(&component_logs, atoms.iter().map(|a| a.1).collect(), s, em_iters);
        for (a, w) in atoms.iter_mut().zip(weights) {
            a.1 = w;
        }
    }
    let candidate = Iterate::from_atoms(atoms, s, cfg)?;
    Ok((candidate.phi >= it.phi && candidate.atoms.len() < it.atoms.len()).then_some(candidate))
}

/// Removes atom `i` and re-weights the rest with EM; kept only if `phi`
/// does not decrease.
fn drop_atom(it: &Iterate, i: usize, s: &CountSample, cfg: &SolverConfig) -> Result<Option<Iterate>> {
    let mut atoms = it.atoms.clone();
    atoms.remove(i);
    let component_logs: Vec<Vec<f64>> = atoms.iter().map(|&(l, _)| log_kernels(l, s)).collect();
    let weights = simplex_em(&component_logs, atoms.iter().map(|a| a.1).collect(), s, COMPACT_EM_ITERS);
    for (a, w) in atoms.iter_mut().zip(weights) {
        a.1 = w;
    }
    let candidate = Iterate::from_atoms(atoms, s, cfg)?;
    Ok((candidate.phi >= it.phi).then_some(candidate))
}

fn try_merge(it: &Iterate, i: usize, j: usize, s: &CountSample, cfg: &SolverConfig) -> Result<Option<Iterate>> {
    match merge_range(it, i, j, 0, s, cfg)? {
        Some(c) => Ok(Some(c)),
        None => merge_range(it, i, j, COMPACT_EM_ITERS, s, cfg),
    }
}

/// Merges runs of close neighbouring atoms, whole runs first and then single
/// pairs, closest first, then tries dropping light atoms; every change must
/// keep `phi` from decreasing.
fn compact(it: &Iterate, s: &CountSample, cfg: &SolverConfig) -> Result<Option<Iterate>> {
    let max_gap = COMPACT_REL_GAP * s.bound();
    let mut current: Option<Iterate> = None;
    'outer: loop {
        let cur = current.as_ref().unwrap_or(it);
        let gap = |i: usize| cur.atoms[i + 1].0 - cur.atoms[i].0;
        let mut pairs: Vec<usize> = (0..cur.atoms.len().saturating_sub(1))
            .filter(|&i| gap(i) <= max_gap)
            .collect();
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for &i in &pairs {
            match runs.last_mut() {
                Some(r) if r.1 == i => r.1 = i + 1,
                _ => runs.push((i, i + 1)),
            }
        }
        for (i, j) in runs.into_iter().filter(|r| r.1 > r.0 + 1) {
            if let Some(c) = try_merge(cur, i, j, s, cfg)? {
                current = Some(c);
                continue 'outer;
            }
        }
        pairs.sort_by(|&a, &b| gap(a).total_cmp(&gap(b)));
        for i in pairs {
            if let Some(c) = try_merge(cur, i, i + 1, s, cfg)? {
                current = Some(c);
                continue 'outer;
            }
        }
        let mut light: Vec<usize> = (0..cur.atoms.len()).collect();
        light.sort_by(|&a, &b| cur.atoms[a].1.total_cmp(&cur.atoms[b].1));
        for i in light.into_iter().take(cur.atoms.len().saturating_sub(1)) {
            if let Some(c) = drop_atom(cur, i, s, cfg)? {
                current = Some(c);
                continue 'outer;
            }
        }
        return Ok(current);
    }
}

fn initial_lambda(s: &CountSample) -> f64 {
    let eps0 = s.bound() * 1e-9;
    s.mean_ratio().clamp(eps0, s.bound())
}

/// Computes the NPMLE of the mixing distribution of `s` on `[0, s.bound()]`.
///
/// Running out of iterations is not an error: the last (best) iterate is
/// returned with `converged = false`.
pub fn fit(s: &CountSample, cfg: &SolverConfig) -> Result<FitResult> {
    cfg.validate()?;
    if s.all_zero() {
        return Ok(FitResult {
            estimate: point_mass(0.0, s.bound())?,
            phi_trace: vec![0.0],
            iterations: 0,
            converged: true,
            max_phi_prime_at_exit: 0.0,
        });
    }
    let mut it = Iterate::from_atoms(vec![(initial_lambda(s), 1.0)], s, cfg)?;
    let mut trace = vec![it.phi];
    let mut iterations = 0;
    let mut converged = false;
    let mut compactions = 0;
    let mut last_max;
    loop {
        let dir = search_max(&it, s, cfg);
        last_max = phi_prime_from_log(dir.psi);
        if last_max <= cfg.stop_tol {
            if cfg.compact && compactions < MAX_COMPACTIONS {
                if let Some(c) = compact(&it, s, cfg)? {
                    compactions += 1;
                    iterations += 1;
                    trace.push(c.phi);
                    it = c;
                    continue;
                }
            }
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
        let next = step(&it, dir, s, cfg)?;
        if next.phi <= it.phi && next.atoms == it.atoms {
            log::debug!("{} stalled at phi = {} with max phi' = {}", cfg.algorithm, it.phi, last_max);
            break;
        }
        iterations += 1;
        trace.push(next.phi);
        it = next;
    }
    Ok(FitResult {
        estimate: it.to_measure(s.bound())?,
        phi_trace: trace,
        iterations,
        converged,
        max_phi_prime_at_exit: last_max,
    })
}

fn prepare(g: &DiscreteMeasure, s: &CountSample) -> Result<Iterate> {
    check_same_bound(g.bound(), s.bound())?;
    let it = Iterate::from_measure(g, s);
    if !it.phi.is_finite() {
        return Err(Error::Precondition("phi(G) is not finite".into()));
    }
    Ok(it)
}

fn single_step(g: &DiscreteMeasure, s: &CountSample, cfg: &SolverConfig, algorithm: Algorithm) -> Result<DiscreteMeasure> {
    let cfg = SolverConfig { algorithm, ..*cfg };
    let it = prepare(g, s)?;
    let dir = search_max(&it, s, &cfg);
    if phi_prime_from_log(dir.psi) <= cfg.stop_tol {
        return Ok(g.clone());
    }
    step(&it, dir, s, &cfg)?.to_measure(s.bound())
}

/// One vertex-direction step from `g`; returns `g` unchanged when the stop
/// rule already holds.
pub fn step_vdm(g: &DiscreteMeasure, s: &CountSample, cfg: &SolverConfig) -> Result<DiscreteMeasure> {
    single_step(g, s, cfg, Algorithm::Vdm)
}

/// One vertex-exchange step from `g`.
pub fn step_vem(g: &DiscreteMeasure, s: &CountSample, cfg: &SolverConfig) -> Result<DiscreteMeasure> {
    single_step(g, s, cfg, Algorithm::Vem)
}

/// One intra-simplex-direction step from `g`.
pub fn step_isdm(g: &DiscreteMeasure, s: &CountSample, cfg: &SolverConfig) -> Result<DiscreteMeasure> {
    single_step(g, s, cfg, Algorithm::Isdm)
}

/// Global maximiser of `phi'(g, .)` as found by the solvers' search
/// (grid plus refinement), returned as `(lambda, phi')`.
pub fn argmax_phi_prime(g: &DiscreteMeasure, s: &CountSample, cfg: &SolverConfig) -> Result<(f64, f64)> {
    let it = prepare(g, s)?;
    let d = search_max(&it, s, cfg);
    Ok((d.lambda, phi_prime_from_log(d.psi)))
}

/// All refined local maximisers of `phi'(g, .)`, as used by ISDM.
pub fn local_maxima_phi_prime(
    g: &DiscreteMeasure,
    s: &CountSample,
    cfg: &SolverConfig,
) -> Result<Vec<(f64, f64)>> {
    let it = prepare(g, s)?;
    Ok(search_all_maxima(&it, s, cfg)
        .into_iter()
        .map(|d| (d.lambda, phi_prime_from_log(d.psi)))
        .collect())
}

/// Largest `phi'(g, delta_lambda)` over a plain uniform grid of `grid_size`
/// points; used to certify a fit independently of the search grid.
pub fn max_phi_prime_on_grid(g: &DiscreteMeasure, s: &CountSample, grid_size: usize) -> Result<f64> {
    let it = prepare(g, s)?;
    Ok(search_grid(s, grid_size)
        .into_iter()
        .map(|l| phi_prime_from_log(it.psi(l, s)))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// With equal read depths the NPMLE has at most as many atoms as there are
/// distinct counts. Returns `None` when read depths differ.
pub fn support_size_check(result: &FitResult, s: &CountSample) -> Option<bool> {
    if !s.equal_read_depths() {
        return None;
    }
    let ok = result.estimate.len() <= s.distinct_counts();
    if !ok {
        log::warn!(
            "NPMLE has {} atoms but only {} distinct counts",
            result.estimate.len(),
            s.distinct_counts()
        );
    }
    Some(ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::phi;

    fn unit(counts: &[u64], b: f64) -> CountSample {
        CountSample::unit_depth(counts.to_vec(), b).unwrap()
    }

    #[test]
    fn single_observation_recovers_point_mass() {
        for alg in [Algorithm::Vdm, Algorithm::Vem, Algorithm::Isdm] {
            let r = fit(&unit(&[3], 20.0), &SolverConfig::with_algorithm(alg)).unwrap();
            assert!(r.converged, "{alg}");
            assert!((r.estimate.mean() - 3.0).abs() < 1e-4, "{alg}: {:?}", r.estimate);
            let far: f64 = r
                .estimate
                .atoms()
                .filter(|a| (a.0 - 3.0).abs() > 1e-4)
                .map(|a| a.1)
                .sum();
            assert!(far < 1e-3, "{alg}: {:?}", r.estimate);
        }
    }

    #[test]
    fn all_zero_counts_give_zero_mass() {
        let r = fit(&unit(&[0, 0, 0], 20.0), &SolverConfig::default()).unwrap();
        assert_eq!(r.estimate.support(), &[0.0]);
        assert!(r.converged);
    }

    #[test]
    fn stop_rule_means_no_step() {
        let s = unit(&[3], 20.0);
        let g = point_mass(3.0, 20.0).unwrap();
        let cfg = SolverConfig::default();
        assert_eq!(step_vdm(&g, &s, &cfg).unwrap(), g);
        assert_eq!(step_vem(&g, &s, &cfg).unwrap(), g);
        assert_eq!(step_isdm(&g, &s, &cfg).unwrap(), g);
    }

    #[test]
    fn vdm_step_moves_towards_peak() {
        let s = unit(&[3], 20.0);
        let g = point_mass(1.0, 20.0).unwrap();
        let cfg = SolverConfig::default();
        let (lam, _) = argmax_phi_prime(&g, &s, &cfg).unwrap();
        assert!((lam - 3.0).abs() < 1e-3, "{lam}");
        let next = step_vdm(&g, &s, &cfg).unwrap();
        let near: f64 = next.atoms().filter(|a| (a.0 - 3.0).abs() < 1e-3).map(|a| a.1).sum();
        assert!(near > 0.5, "{next:?}");
        assert!(phi(&next, &s).unwrap() >= phi(&g, &s).unwrap());
    }

    #[test]
    fn two_peaks_are_both_candidates() {
        let s = unit(&[0, 0, 10, 10], 20.0);
        let g = point_mass(5.0, 20.0).unwrap();
        let maxima = local_maxima_phi_prime(&g, &s, &SolverConfig::default()).unwrap();
        assert!(maxima.iter().any(|m| m.0 < 0.1), "{maxima:?}");
        assert!(maxima.iter().any(|m| (m.0 - 10.0).abs() < 0.5), "{maxima:?}");
    }

    #[test]
    fn precondition_on_infinite_phi() {
        let s = unit(&[4], 20.0);
        let g = point_mass(0.0, 20.0).unwrap();
        assert!(matches!(
            step_vem(&g, &s, &SolverConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig {
            grid_size: 5,
            ..SolverConfig::default()
        };
        assert!(fit(&unit(&[1], 5.0), &cfg).is_err());
        assert_eq!("VEM".parse::<Algorithm>().unwrap(), Algorithm::Vem);
        assert!("em".parse::<Algorithm>().is_err());
    }

    #[test]
    fn support_size_diagnostic() {
        let cfg = SolverConfig::default();
        let s = unit(&[3, 3, 3], 20.0);
        assert_eq!(support_size_check(&fit(&s, &cfg).unwrap(), &s), Some(true));
        let s = unit(&[1, 5], 20.0);
        assert_eq!(support_size_check(&fit(&s, &cfg).unwrap(), &s), Some(true));
        let s = CountSample::new(vec![1, 5], vec![1.0, 1.2], 20.0).unwrap();
        assert_eq!(support_size_check(&fit(&s, &cfg).unwrap(), &s), None);
    }
}
