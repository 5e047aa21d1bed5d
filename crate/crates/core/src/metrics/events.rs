//! Event-timing statistics: inter-event intervals, duty, burstiness, Fano.

use serde::{Deserialize, Serialize};

use super::stats::{mean, percentile, std_dev, variance};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsiStats {
    pub mean: f64,
    pub std: f64,
    pub cv: Option<f64>,
    /// `(sigma - mu) / (sigma + mu)`.
    pub burstiness: Option<f64>,
}

/// Interval statistics of a merged timestamp sequence (sorted internally).
/// `None` with fewer than two events.
pub fn isi_stats(timestamps: &[f64]) -> Option<IsiStats> {
    if timestamps.len() < 2 {
        return None;
    }
    let mut ts = timestamps.to_vec();
    ts.sort_by(f64::total_cmp);
    let isi: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    let mu = mean(&isi)?;
    let sd = std_dev(&isi)?;
    Some(IsiStats {
        mean: mu,
        std: sd,
        cv: (mu > 0.0).then(|| sd / mu),
        burstiness: (sd + mu > 0.0).then(|| (sd - mu) / (sd + mu)),
    })
}

/// `Var(N_w) / E[N_w]` over sliding windows of `window` ticks, stride 1.
pub fn fano_factor(counts: &[f64], window: usize) -> Option<f64> {
    if window == 0 || counts.len() < window {
        return None;
    }
    let mut sums = Vec::with_capacity(counts.len() - window + 1);
    let mut s: f64 = counts[..window].iter().sum();
    sums.push(s);
    for k in window..counts.len() {
        s += counts[k] - counts[k - window];
        sums.push(s);
    }
    let m = mean(&sums)?;
    (m > 0.0).then(|| variance(&sums).unwrap() / m)
}

/// Mean squared second difference of a series.
pub fn second_difference_energy(series: &[f64]) -> Option<f64> {
    if series.len() < 3 {
        return None;
    }
    let d: Vec<f64> = series.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).powi(2)).collect();
    mean(&d)
}

/// Mean active fraction.
pub fn duty_cycle(active_counts: &[f64], n_agents: usize) -> Option<f64> {
    mean(active_counts).map(|m| m / n_agents as f64)
}

/// 95th percentile of per-agent idle gaps between the end of one action and
/// the next start.
pub fn inactivity_gap_p95(per_agent_starts: &[Vec<u64>], duration: u64) -> Option<f64> {
    let gaps: Vec<f64> = per_agent_starts
        .iter()
        .flat_map(|s| s.windows(2).map(move |w| w[1].saturating_sub(w[0] + duration) as f64))
        .collect();
    percentile(&gaps, 95.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Poisson};

    #[test]
    fn periodic_events() {
        let ts: Vec<f64> = (0..100).map(|k| k as f64 * 4.0).collect();
        let s = isi_stats(&ts).unwrap();
        assert_eq!(s.cv, Some(0.0));
        assert_eq!(s.burstiness, Some(-1.0));
        assert!(isi_stats(&[1.0]).is_none());
    }

    #[test]
    fn poisson_stream_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let exp = Exp::new(1.0).unwrap();
        let mut t = 0.0;
        let ts: Vec<f64> = (0..100_000)
            .map(|_| {
                t += exp.sample(&mut rng);
                t
            })
            .collect();
        let cv = isi_stats(&ts).unwrap().cv.unwrap();
        assert!((cv - 1.0).abs() < 0.02, "{cv}");
        let pois = Poisson::new(3.0).unwrap();
        let counts: Vec<f64> = (0..40_000).map(|_| pois.sample(&mut rng)).collect();
        let f = fano_factor(&counts, 60).unwrap();
        assert!((f - 1.0).abs() < 0.15, "{f}");
    }

    #[test]
    fn constant_counts_zero_fano() {
        assert_eq!(fano_factor(&[2.0; 500], 60), Some(0.0));
        assert_eq!(fano_factor(&[0.0; 500], 60), None);
        assert_eq!(fano_factor(&[1.0; 10], 60), None);
    }

    #[test]
    fn second_difference_and_duty() {
        assert_eq!(second_difference_energy(&[1.0, 2.0, 3.0, 4.0]), Some(0.0));
        assert_eq!(second_difference_energy(&[0.0, 1.0, 0.0]), Some(4.0));
        assert_eq!(duty_cycle(&[10.0, 30.0], 100), Some(0.2));
    }

    #[test]
    fn gaps() {
        let starts = vec![vec![0, 10, 30], vec![5, 13]];
        // Gaps: 2, 12, 0.
        let p = inactivity_gap_p95(&starts, 8).unwrap();
        assert!((p - 11.0).abs() < 1e-12);
    }
}
