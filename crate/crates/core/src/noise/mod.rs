//! Seeded multi-octave gradient noise and the value mappings built on it.

mod field;
mod perlin;
pub mod raster;
mod seed;

pub use field::{BoundaryMode, FieldSampler, NoiseSpec, TemporalMode};
pub use perlin::{perlin3, PermutationTable, AMPLITUDE_BOUND};
pub use seed::{
    derive_indexed, derive_substream, fnv1a64, rng_from_seed, splitmix_finalize, tag_hash, unit_from_bits, SeedBundle,
    SimRng, GOLDEN_GAMMA,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("invalid noise spec: {0}")]
    InvalidSpec(String),
    #[error("quantile map needs at least one value")]
    EmptyValues,
    #[error("class fractions must be positive and sum to 1 (got sum {0})")]
    BadFractions(f64),
}

/// `(n + 1) / 2`, clamped to `[0, 1]`.
#[inline]
pub fn to_unit(n: f64) -> f64 {
    ((n + 1.0) * 0.5).clamp(0.0, 1.0)
}

/// Rank-based class assignment: values are sorted (ties by index) and the
/// ranks cut into consecutive bands holding `fractions[c]` of the total.
///
/// Band edges are `round(n * cumulative_fraction)`, so every class count is
/// within one of `fraction * n`.
pub fn quantile_map(values: &[f64], fractions: &[f64]) -> Result<Vec<usize>, NoiseError> {
    if values.is_empty() {
        return Err(NoiseError::EmptyValues);
    }
    let total: f64 = fractions.iter().sum();
    if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(NoiseError::BadFractions(total));
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let mut classes = vec![0usize; n];
    let mut cum = 0.0;
    let mut start = 0usize;
    for (c, &f) in fractions.iter().enumerate() {
        cum += f;
        let end = if c + 1 == fractions.len() { n } else { ((cum * n as f64).round() as usize).min(n) };
        for &i in &order[start..end.max(start)] {
            classes[i] = c;
        }
        start = end.max(start);
    }
    Ok(classes)
}

/// Hazard intensity `lambda0 * (eps + (1 - eps) * u)`.
#[inline]
pub fn hazard_rate(u: f64, lambda0: f64, eps: f64) -> f64 {
    lambda0 * (eps + (1.0 - eps) * u.clamp(0.0, 1.0))
}

/// Probability of at least one event at rate `lambda` over `dt`.
#[inline]
pub fn rate_to_probability(lambda: f64, dt: f64) -> f64 {
    1.0 - (-lambda * dt).exp()
}

/// Activation probability for a unit field value.
#[inline]
pub fn hazard_map(u: f64, lambda0: f64, eps: f64, dt: f64) -> f64 {
    rate_to_probability(hazard_rate(u, lambda0, eps), dt)
}

/// Tick within a cycle for a unit field value; `u = 1` maps to the last tick.
#[inline]
pub fn phase_map(u: f64, cycle: u64) -> u64 {
    debug_assert!(cycle >= 1);
    ((u.clamp(0.0, 1.0) * cycle as f64).floor() as u64).min(cycle - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn to_unit_endpoints() {
        assert_eq!(to_unit(-1.0), 0.0);
        assert_eq!(to_unit(0.0), 0.5);
        assert_eq!(to_unit(1.0), 1.0);
        assert_eq!(to_unit(3.0), 1.0);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile_map(&[0.1, 0.2, 0.3, 0.4], &[0.25, 0.75]).unwrap(), vec![0, 1, 1, 1]);
        assert_eq!(quantile_map(&[0.5; 4], &[0.5, 0.5]).unwrap(), vec![0, 0, 1, 1]);
        assert_eq!(quantile_map(&[3.0, 1.0, 2.0], &[1.0]).unwrap(), vec![0, 0, 0]);
        assert_eq!(quantile_map(&[], &[1.0]), Err(NoiseError::EmptyValues));
        assert!(quantile_map(&[1.0], &[0.5, 0.4]).is_err());
        assert!(quantile_map(&[1.0], &[1.2, -0.2]).is_err());
    }

    #[test]
    fn hazard_closed_forms() {
        assert_eq!(hazard_map(0.0, 1.0, 0.0, 1.0), 0.0);
        assert!((hazard_map(0.5, 1.0, 0.0, 1.0) - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        assert!((hazard_map(1.0, 2.0, 0.2, 1.0) - 0.864_664_716_763_387).abs() < 1e-12);
    }

    #[test]
    fn phase_examples() {
        assert_eq!(phase_map(0.0, 60), 0);
        assert_eq!(phase_map(0.999, 60), 59);
        assert_eq!(phase_map(1.0, 60), 59);
    }

    /// Sort-and-cut oracle written independently of the implementation.
    fn oracle(values: &[f64], fractions: &[f64]) -> Vec<usize> {
        let n = values.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
        let mut edges = Vec::new();
        let mut acc = 0.0;
        for f in fractions {
            acc += f;
            edges.push((acc * n as f64).round() as usize);
        }
        *edges.last_mut().unwrap() = n;
        let mut out = vec![0; n];
        for (rank, &i) in idx.iter().enumerate() {
            out[i] = edges.iter().position(|&e| rank < e).unwrap();
        }
        out
    }

    fn fractions_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1u32..20, 1..6).prop_map(|w| {
            let s: u32 = w.iter().sum();
            let mut f: Vec<f64> = w.iter().map(|&x| x as f64 / s as f64).collect();
            let head: f64 = f[..f.len() - 1].iter().sum();
            *f.last_mut().unwrap() = 1.0 - head;
            f
        })
    }

    proptest! {
        #[test]
        fn quantile_matches_oracle_and_counts(
            values in prop::collection::vec(-1.0f64..1.0, 1..300),
            fractions in fractions_strategy(),
        ) {
            let got = quantile_map(&values, &fractions).unwrap();
            prop_assert_eq!(&got, &oracle(&values, &fractions));
            let n = values.len() as f64;
            for (c, f) in fractions.iter().enumerate() {
                let count = got.iter().filter(|&&k| k == c).count() as f64;
                prop_assert!((count - (f * n).round()).abs() <= 1.0);
            }
            for i in 0..values.len() {
                for j in 0..values.len() {
                    if values[i] > values[j] {
                        prop_assert!(got[i] >= got[j]);
                    }
                }
            }
        }

        #[test]
        fn quantile_rank_invariant(
            values in prop::collection::vec(-1.0f64..1.0, 1..300),
            fractions in fractions_strategy(),
        ) {
            let a = quantile_map(&values, &fractions).unwrap();
            let t: Vec<f64> = values.iter().map(|v| (3.0 * v).exp() + 7.0).collect();
            prop_assert_eq!(a, quantile_map(&t, &fractions).unwrap());
        }

        #[test]
        fn phase_in_range(u in 0.0f64..=1.0, cycle in 1u64..5000) {
            prop_assert!(phase_map(u, cycle) < cycle);
        }
    }
}
