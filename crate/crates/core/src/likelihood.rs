//! Poisson mixture log-likelihood and its directional derivative towards a
//! point mass.
//!
//! Per-cell kernel terms are `x * ln(lambda * r) - lambda * r`; the `1 / x!`
//! constant is left out, so `phi` differs from the textbook log-likelihood by
//! a data-only constant (see [`CountSample::log_factorial_constant`]).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{check_same_bound, DiscreteMeasure};

/// Distinct `(count, read depth)` pair with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Obs {
    pub x: f64,
    pub r: f64,
    pub ln_r: f64,
    pub mult: f64,
}

/// One subject's cell counts and read depths, with the common support bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSample", into = "RawSample")]
pub struct CountSample {
    counts: Vec<u64>,
    read_depths: Vec<f64>,
    bound: f64,
    #[serde(skip)]
    unique: Vec<Obs>,
}

#[derive(Serialize, Deserialize)]
struct RawSample {
    counts: Vec<u64>,
    read_depths: Vec<f64>,
    bound: f64,
}

impl TryFrom<RawSample> for CountSample {
    type Error = Error;
    fn try_from(raw: RawSample) -> Result<Self> {
        CountSample::new(raw.counts, raw.read_depths, raw.bound)
    }
}

impl From<CountSample> for RawSample {
    fn from(s: CountSample) -> Self {
        RawSample {
            counts: s.counts,
            read_depths: s.read_depths,
            bound: s.bound,
        }
    }
}

impl CountSample {
    pub fn new(counts: Vec<u64>, read_depths: Vec<f64>, bound: f64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::domain("a count sample needs at least one cell"));
        }
        if counts.len() != read_depths.len() {
            return Err(Error::domain(format!(
                "{} counts but {} read depths",
                counts.len(),
                read_depths.len()
            )));
        }
        if let Some(r) = read_depths.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::domain(format!("read depths must be positive, got {r}")));
        }
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::domain(format!("bound must be positive, got {bound}")));
        }
        let mut groups: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        for (&x, &r) in counts.iter().zip(&read_depths) {
            *groups.entry((x, r.to_bits())).or_insert(0.0) += 1.0;
        }
        let unique = groups
            .into_iter()
            .map(|((x, rb), mult)| {
                let r = f64::from_bits(rb);
                Obs {
                    x: x as f64,
                    r,
                    ln_r: r.ln(),
                    mult,
                }
            })
            .collect();
        Ok(Self {
            counts,
            read_depths,
            bound,
            unique,
        })
    }

    /// Sample with every read depth equal to one.
    pub fn unit_depth(counts: Vec<u64>, bound: f64) -> Result<Self> {
        let n = counts.len();
        Self::new(counts, vec![1.0; n], bound)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn read_depths(&self) -> &[f64] {
        &self.read_depths
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Same cells, different support bound.
    pub fn with_bound(&self, bound: f64) -> Result<Self> {
        Self::new(self.counts.clone(), self.read_depths.clone(), bound)
    }

    pub fn all_zero(&self) -> bool {
        self.counts.iter().all(|&x| x == 0)
    }

    pub fn equal_read_depths(&self) -> bool {
        self.read_depths.windows(2).all(|w| w[0] == w[1])
    }

    /// `mean(X_i / r_i)`, the method-of-moments intensity.
    pub fn mean_ratio(&self) -> f64 {
        self.counts
            .iter()
            .zip(&self.read_depths)
            .map(|(&x, r)| x as f64 / r)
            .sum::<f64>()
            / self.len() as f64
    }

    pub fn distinct_counts(&self) -> usize {
        let mut c = self.counts.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    }

    /// `-(1/N) sum_i ln(X_i!)`; adding it to [`phi`] gives the per-cell
    /// Poisson mixture log-likelihood.
    pub fn log_factorial_constant(&self) -> f64 {
        let total: f64 = self
            .counts
            .iter()
            .map(|&x| (1..=x).map(|k| (k as f64).ln()).sum::<f64>())
            .sum();
        -total / self.len() as f64
    }

    pub(crate) fn unique(&self) -> &[Obs] {
        &self.unique
    }

    pub(crate) fn total_weight(&self) -> f64 {
        self.counts.len() as f64
    }
}

/// `x ln(lambda r) - lambda r`, with `0^0 = 1`.
#[inline]
pub(crate) fn log_kernel(lambda: f64, ln_lambda: f64, o: &Obs) -> f64 {
    if o.x == 0.0 {
        -lambda * o.r
    } else if lambda == 0.0 {
        f64::NEG_INFINITY
    } else {
        o.x * (ln_lambda + o.ln_r) - lambda * o.r
    }
}

#[inline]
pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + terms.map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Per-unique-observation `ln sum_m w_m k(lambda_m)`.
pub(crate) fn log_mixture(atoms: &[(f64, f64)], s: &CountSample) -> Vec<f64> {
    let prepared: Vec<(f64, f64, f64)> = atoms
        .iter()
        .filter(|a| a.1 > 0.0)
        .map(|&(l, w)| (l, l.ln(), w.ln()))
        .collect();
    s.unique()
        .iter()
        .map(|o| {
            log_sum_exp(
                prepared
                    .iter()
                    .map(|&(l, ll, lw)| lw + log_kernel(l, ll, o)),
            )
        })
        .collect()
}

/// `phi` from cached per-observation log mixtures.
pub(crate) fn phi_from_log_mixture(log_mix: &[f64], s: &CountSample) -> f64 {
    let mut total = 0.0;
    for (lm, o) in log_mix.iter().zip(s.unique()) {
        if *lm == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += o.mult * lm;
    }
    total / s.total_weight()
}

pub(crate) fn phi_atoms(atoms: &[(f64, f64)], s: &CountSample) -> f64 {
    phi_from_log_mixture(&log_mixture(atoms, s), s)
}

/// `ln(1 + phi'(G, delta_lambda))`. Monotone in `phi'` and free of overflow,
/// so searches run on this scale.
pub(crate) fn log_ratio_mean(lambda: f64, log_mix: &[f64], s: &CountSample) -> f64 {
    let ll = lambda.ln();
    let ln_n = s.total_weight().ln();
    log_sum_exp(
        log_mix
            .iter()
            .zip(s.unique())
            .map(move |(lm, o)| o.mult.ln() + log_kernel(lambda, ll, o) - lm - ln_n),
    )
}

/// Converts the log-scale directional derivative back to `phi'`.
#[inline]
pub(crate) fn phi_prime_from_log(psi: f64) -> f64 {
    psi.exp_m1()
}

fn measure_atoms(g: &DiscreteMeasure) -> Vec<(f64, f64)> {
    g.atoms().collect()
}

/// `(1/N) sum_i ln sum_m w_m e^{-l_m r_i} (l_m r_i)^{X_i}`.
///
/// Returns negative infinity when some cell has zero mixture probability.
pub fn phi(g: &DiscreteMeasure, s: &CountSample) -> Result<f64> {
    check_same_bound(g.bound(), s.bound())?;
    Ok(phi_atoms(&measure_atoms(g), s))
}

/// Directional derivative of [`phi`] from `g` towards the point mass at `lambda`.
pub fn phi_prime(g: &DiscreteMeasure, lambda: f64, s: &CountSample) -> Result<f64> {
    check_same_bound(g.bound(), s.bound())?;
    if !(0.0..=s.bound()).contains(&lambda) {
        return Err(Error::domain(format!("lambda {lambda} outside [0, {}]", s.bound())));
    }
    let log_mix = log_mixture(&measure_atoms(g), s);
    let p = phi_from_log_mixture(&log_mix, s);
    if !p.is_finite() {
        return Err(Error::Precondition(
            "phi(G) is not finite; the directional derivative is undefined".into(),
        ));
    }
    Ok(phi_prime_from_log(log_ratio_mean(lambda, &log_mix, s)))
}

/// Grid points used for directional-derivative searches: uniform over
/// `[0, B]`, with 0 replaced by `B * 1e-9` when any count is positive.
pub fn search_grid(s: &CountSample, grid_size: usize) -> Vec<f64> {
    let b = s.bound();
    let n = grid_size.max(2);
    let mut grid: Vec<f64> = (0..n).map(|j| b * j as f64 / (n - 1) as f64).collect();
    if !s.all_zero() {
        grid[0] = b * 1e-9;
    }
    grid
}

/// Evaluates `phi'(G, delta_lambda)` on [`search_grid`].
pub fn phi_prime_grid(
    g: &DiscreteMeasure,
    s: &CountSample,
    grid_size: usize,
) -> Result<Vec<(f64, f64)>> {
    if grid_size < 2 {
        return Err(Error::domain("grid_size must be at least 2"));
    }
    check_same_bound(g.bound(), s.bound())?;
    let log_mix = log_mixture(&measure_atoms(g), s);
    if !phi_from_log_mixture(&log_mix, s).is_finite() {
        return Err(Error::Precondition("phi(G) is not finite".into()));
    }
    Ok(search_grid(s, grid_size)
        .into_iter()
        .map(|l| (l, phi_prime_from_log(log_ratio_mean(l, &log_mix, s))))
        .collect())
}
