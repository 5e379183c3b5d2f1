use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    pub rejected: Vec<bool>,
    /// BH-adjusted p-values (q-values), in input order.
    pub adjusted: Vec<f64>,
}

/// Benjamini-Hochberg step-up procedure at FDR level `q`.
pub fn benjamini_hochberg(p_values: &[f64], q: f64) -> Result<BhResult> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("FDR level {q} outside (0, 1)")));
    }
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::domain(format!("p-value {p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));

    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        let candidate = p_values[i] * m as f64 / (rank + 1) as f64;
        running = running.min(candidate).min(1.0);
        adjusted[i] = running;
    }

    // largest k with p_(k) <= k q / m; reject the k smallest
    let cutoff = (0..m)
        .rev()
        .find(|&rank| p_values[order[rank]] <= (rank + 1) as f64 * q / m as f64);
    let mut rejected = vec![false; m];
    if let Some(k) = cutoff {
        for &i in &order[..=k] {
            rejected[i] = true;
        }
    }
    Ok(BhResult { rejected, adjusted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_examples() {
        let r = benjamini_hochberg(&[0.01, 0.5], 0.05).unwrap();
        assert_eq!(r.rejected, vec![true, false]);

        let r = benjamini_hochberg(&[1.0, 1.0, 1.0], 0.05).unwrap();
        assert_eq!(r.rejected, vec![false; 3]);
        assert_eq!(r.adjusted, vec![1.0; 3]);

        let r = benjamini_hochberg(&[0.01, 0.02, 0.03, 0.5], 0.05).unwrap();
        assert_eq!(r.rejected, vec![true, true, true, false]);
        assert_abs_diff_eq!(r.adjusted[2], 0.04, epsilon = 1e-15);
    }

    #[test]
    fn step_up_rescues_earlier_ranks() {
        // p_(1) = 0.04 > 0.05/3 but p_(3) = 0.045 <= 0.05: all three rejected.
        let r = benjamini_hochberg(&[0.045, 0.04, 0.042], 0.05).unwrap();
        assert_eq!(r.rejected, vec![true; 3]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(benjamini_hochberg(&[0.1], 0.0).is_err());
        assert!(benjamini_hochberg(&[1.1], 0.05).is_err());
        assert!(benjamini_hochberg(&[], 0.05).unwrap().rejected.is_empty());
    }
}
