//! Small descriptive-statistics helpers shared by the metric families.

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Population variance (divides by `n`).
pub fn variance(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    Some(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64)
}

pub fn std_dev(xs: &[f64]) -> Option<f64> {
    variance(xs).map(f64::sqrt)
}

/// Sample standard deviation (divides by `n - 1`); 0 for a single value.
pub fn sample_std(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() == 1 {
        return Some(0.0);
    }
    Some((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

/// Third standardised moment; `None` when the spread is zero.
pub fn skewness(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    let s = std_dev(xs)?;
    if s == 0.0 {
        return None;
    }
    Some(xs.iter().map(|x| ((x - m) / s).powi(3)).sum::<f64>() / xs.len() as f64)
}

/// Linear-interpolation percentile, `q` in `[0, 100]`.
pub fn percentile(xs: &[f64], q: f64) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Pearson correlation; `None` if either series has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let ma = mean(a)?;
    let mb = mean(b)?;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Mean, sample std, and normal-approximation 95% half-width over seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedSummary {
    pub mean: f64,
    pub std: f64,
    pub ci95: f64,
    pub n: usize,
}

impl SeedSummary {
    pub fn of(xs: &[f64]) -> Option<Self> {
        // Averaging offsets from the first value keeps identical inputs exact.
        let x0 = *xs.first()?;
        let n = xs.len();
        let mean = x0 + xs.iter().map(|x| x - x0).sum::<f64>() / n as f64;
        let std = if n == 1 { 0.0 } else { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() };
        let se = std / (xs.len() as f64).sqrt();
        Some(Self { mean, std, ci95: 1.96 * se, n: xs.len() })
    }

    pub fn std_err(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_moments() {
        assert_eq!(mean(&[1.0, 3.0]), Some(2.0));
        assert_eq!(sample_std(&[1.0, 3.0]), Some(2f64.sqrt()));
        assert_eq!(sample_std(&[5.0]), Some(0.0));
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 50.0), Some(3.0));
        assert_eq!(percentile(&[0.0, 10.0], 95.0), Some(9.5));
        assert_eq!(mean(&[]), None);
    }

    #[test]
    fn pearson_edge_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn seed_summary() {
        let s = SeedSummary::of(&[4.0]).unwrap();
        assert_eq!((s.std, s.ci95), (0.0, 0.0));
        let s = SeedSummary::of(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.ci95 - 1.96).abs() < 1e-12);
    }
}
