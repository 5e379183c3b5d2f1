//! Discrete probability measures on `[0, B]`, their Poisson-smoothed PMFs,
//! and Wasserstein-1 distances between either.
//!
//! On the real line W1 equals the integral of the absolute CDF difference, so
//! both distances are computed exactly by sweeping merged breakpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights below this are dropped after normalisation.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-12;
/// Atoms closer than `MERGE_REL_TOL * bound` are merged.
pub const MERGE_REL_TOL: f64 = 1e-9;
/// Default truncation tolerance for [`poisson_smooth`].
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

/// A finitely supported probability measure on `[0, bound]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    support: Vec<f64>,
    weights: Vec<f64>,
    bound: f64,
}

impl DiscreteMeasure {
    /// Builds a measure from unnormalised atoms.
    ///
    /// Atoms are sorted, near-duplicates merged, weights normalised and atoms
    /// below [`DEFAULT_WEIGHT_FLOOR`] pruned.
    pub fn new(support: Vec<f64>, weights: Vec<f64>, bound: f64) -> Result<Self> {
        Self::with_floor(support, weights, bound, DEFAULT_WEIGHT_FLOOR)
    }

    pub fn with_floor(
        support: Vec<f64>,
        weights: Vec<f64>,
        bound: f64,
        weight_floor: f64,
    ) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::domain(format!("bound must be positive and finite, got {bound}")));
        }
        if support.len() != weights.len() {
            return Err(Error::domain(format!(
                "support has {} points but {} weights were given",
                support.len(),
                weights.len()
            )));
        }
        if support.is_empty() {
            return Err(Error::domain("a measure needs at least one atom"));
        }
        let mut atoms = Vec::with_capacity(support.len());
        for (&x, &w) in support.iter().zip(&weights) {
            if !(x.is_finite() && (0.0..=bound).contains(&x)) {
                return Err(Error::domain(format!("support point {x} outside [0, {bound}]")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::domain(format!("invalid weight {w}")));
            }
            atoms.push((x, w));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::from_sorted_atoms(atoms, bound, weight_floor)
    }

    /// Normalises, merges and prunes atoms that are already sorted by location
    /// and known to lie in `[0, bound]`.
    pub(crate) fn from_sorted_atoms(
        atoms: Vec<(f64, f64)>,
        bound: f64,
        weight_floor: f64,
    ) -> Result<Self> {
        let merge_tol = MERGE_REL_TOL * bound;
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            if w <= 0.0 {
                continue;
            }
            match merged.last_mut() {
                Some(last) if x - last.0 < merge_tol => {
                    let total = last.1 + w;
                    // rounding must not push the average outside [last.0, x]
                    last.0 = ((last.0 * last.1 + x * w) / total).clamp(last.0, x);
                    last.1 = total;
                }
                _ => merged.push((x, w)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::domain("weights must have a positive finite sum"));
        }
        for a in &mut merged {
            a.1 /= total;
        }
        let heaviest = merged
            .iter()
            .map(|a| a.1)
            .fold(0.0_f64, f64::max);
        merged.retain(|a| a.1 >= weight_floor || a.1 == heaviest);
        let total: f64 = merged.iter().map(|a| a.1).sum();
        let (support, weights) = merged.into_iter().map(|(x, w)| (x, w / total)).unzip();
        Ok(Self {
            support,
            weights,
            bound,
        })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(x, w)| x * w).sum()
    }

    /// `t * self + (1 - t) * other`.
    pub fn mix(&self, other: &Self, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("mixing proportion {t} outside [0, 1]")));
        }
        check_same_bound(self.bound, other.bound)?;
        let mut atoms: Vec<(f64, f64)> = self
            .atoms()
            .map(|(x, w)| (x, t * w))
            .chain(other.atoms().map(|(x, w)| (x, (1.0 - t) * w)))
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::from_sorted_atoms(atoms, self.bound, DEFAULT_WEIGHT_FLOOR)
    }
}

pub(crate) fn check_same_bound(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
        return Err(Error::domain(format!("bound mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// The unit mass at `lambda`.
pub fn point_mass(lambda: f64, bound: f64) -> Result<DiscreteMeasure> {
    DiscreteMeasure::new(vec![lambda], vec![1.0], bound)
}

/// PMF of a Poisson mixture on `0..=x_max`, with the remaining mass recorded
/// as `tail_mass`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedPMF {
    masses: Vec<f64>,
    tail_mass: f64,
    /// Upper bound on `sum_{x > x_max} P(X > x)`, the W1 contribution lost
    /// beyond the truncation point.
    tail_excess_bound: f64,
}

impl TruncatedPMF {
    /// Wraps explicit masses. The tail mass is `1 - sum(masses)` and must not
    /// exceed `tail_tol`.
    pub fn from_masses(masses: Vec<f64>, tail_tol: f64) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::domain("a PMF needs at least one mass"));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::domain("masses must be finite and nonnegative"));
        }
        let total: f64 = masses.iter().sum();
        let tail = 1.0 - total;
        if tail < -1e-10 || tail > tail_tol.max(1e-10) {
            return Err(Error::domain(format!("masses sum to {total}, tail tolerance {tail_tol}")));
        }
        let tail = tail.max(0.0);
        // Without knowledge of the generating measure the tail is placed at
        // x_max + 1.
        Ok(Self {
            masses,
            tail_mass: tail,
            tail_excess_bound: tail,
        })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn x_max(&self) -> usize {
        self.masses.len() - 1
    }

    pub fn tail_excess_bound(&self) -> f64 {
        self.tail_excess_bound
    }

    /// Mean over the retained masses; a lower bound on the untruncated mean.
    pub fn truncated_mean(&self) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(x, m)| x as f64 * m)
            .sum()
    }

    fn cdf_at(&self, x: usize, cumulative: f64) -> f64 {
        if x <= self.x_max() {
            cumulative
        } else {
            1.0 - self.tail_mass
        }
    }
}

/// Poisson smoothing `h_G(x) = sum_m w_m e^{-l_m} l_m^x / x!`, truncated at the
/// smallest `x_max` whose remaining mass is at most `tail_tol`.
pub fn poisson_smooth(g: &DiscreteMeasure, tail_tol: f64) -> Result<TruncatedPMF> {
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::domain(format!("tail tolerance {tail_tol} outside (0, 1)")));
    }
    let lam_max = g.support().last().copied().unwrap_or(0.0);
    // Far enough out that the true Poisson tail is below 1e-30.
    let hard_cap = (lam_max + 20.0 * lam_max.sqrt() + 80.0).ceil() as usize;

    let ln_lam: Vec<f64> = g.support().iter().map(|l| l.ln()).collect();
    let mut per_atom_cdf = vec![0.0; g.len()];
    let mut masses = Vec::new();
    let mut cumulative = 0.0;
    let mut ln_fact = 0.0;
    let mut x = 0usize;
    loop {
        if x > 0 {
            ln_fact += (x as f64).ln();
        }
        let mut mass = 0.0;
        for (m, (lam, w)) in g.atoms().enumerate() {
            let p = if lam == 0.0 {
                if x == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (x as f64 * ln_lam[m] - lam - ln_fact).exp()
            };
            per_atom_cdf[m] += p;
            mass += w * p;
        }
        masses.push(mass);
        cumulative += mass;
        let tail = 1.0 - cumulative;
        if tail <= tail_tol || x >= hard_cap {
            let tail_mass = tail.clamp(0.0, tail_tol);
            // E[(X - x_max - 1)^+] <= E[X 1{X >= x_max + 2}] = sum w l P(Pois(l) >= x_max + 1)
            let tail_excess_bound = g
                .atoms()
                .zip(&per_atom_cdf)
                .map(|((lam, w), cdf)| w * lam * (1.0 - cdf).max(0.0))
                .sum();
            return Ok(TruncatedPMF {
                masses,
                tail_mass,
                tail_excess_bound,
            });
        }
        x += 1;
    }
}

/// Exact W1 between two discrete measures.
pub fn w1_measures(g1: &DiscreteMeasure, g2: &DiscreteMeasure) -> f64 {
    let (s1, w1) = (g1.support(), g1.weights());
    let (s2, w2) = (g2.support(), g2.weights());
    let (mut i, mut j) = (0, 0);
    let (mut f1, mut f2) = (0.0_f64, 0.0_f64);
    let mut prev: Option<f64> = None;
    let mut total = 0.0;
    while i < s1.len() || j < s2.len() {
        let next = match (s1.get(i), s2.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            total += (f1 - f2).abs() * (next - p);
        }
        while i < s1.len() && s1[i] == next {
            f1 += w1[i];
            i += 1;
        }
        while j < s2.len() && s2[j] == next {
            f2 += w2[j];
            j += 1;
        }
        prev = Some(next);
    }
    total
}

/// W1 between two truncated PMFs, summing `|H1(x) - H2(x)|` up to the larger
/// `x_max`.
pub fn w1_pmfs(h1: &TruncatedPMF, h2: &TruncatedPMF) -> f64 {
    w1_pmfs_with_error(h1, h2).0
}

/// W1 between two truncated PMFs together with a rigorous bound on the
/// absolute difference to the untruncated value.
pub fn w1_pmfs_with_error(h1: &TruncatedPMF, h2: &TruncatedPMF) -> (f64, f64) {
    let top = h1.x_max().max(h2.x_max());
    let (mut c1, mut c2) = (0.0, 0.0);
    let mut total = 0.0;
    for x in 0..=top {
        c1 += h1.masses.get(x).copied().unwrap_or(0.0);
        c2 += h2.masses.get(x).copied().unwrap_or(0.0);
        total += (h1.cdf_at(x, c1) - h2.cdf_at(x, c2)).abs();
    }
    let padding = |h: &TruncatedPMF| (top - h.x_max()) as f64 * h.tail_mass;
    let error =
        padding(h1) + padding(h2) + h1.tail_excess_bound + h2.tail_excess_bound;
    (total, error)
}
