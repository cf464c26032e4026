//! Gaussian smoothing and Pearson correlation of per-window series.

use crate::error::{invalid, Error, Result};

/// Default smoothing radius, in windows.
pub const DEFAULT_RADIUS: f64 = 10.0;

/// Kernel support in standard deviations.
const TRUNCATE_SIGMAS: f64 = 4.0;

/// Discrete Gaussian kernel with standard deviation `radius`, truncated at
/// `±4·radius` and normalized to unit mass. Index `half_width` is the centre.
pub fn gaussian_kernel(radius: f64) -> Result<Vec<f64>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid(format!("smoothing radius must be positive, got {radius}"));
    }
    let half = (TRUNCATE_SIGMAS * radius).ceil() as usize;
    let raw: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let x = i as f64 - half as f64;
            (-0.5 * (x / radius).powi(2)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|k| k / total).collect())
}

/// Convolves `values` with [`gaussian_kernel`]. Near the ends the kernel is
/// cut to the available samples and renormalized over what remains.
pub fn gaussian_smooth(values: &[f64], radius: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return invalid("cannot smooth an empty series");
    }
    if values.iter().any(|x| !x.is_finite()) {
        return invalid("series contains non-finite values");
    }
    let kernel = gaussian_kernel(radius)?;
    let half = kernel.len() / 2;
    let len = values.len();
    Ok((0..len)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(len - 1);
            let mut acc = 0.0;
            let mut mass = 0.0;
            for (j, &x) in values.iter().enumerate().take(hi + 1).skip(lo) {
                let k = kernel[j + half - i];
                acc += k * x;
                mass += k;
            }
            acc / mass
        })
        .collect())
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return invalid(format!("series lengths differ: {} vs {}", a.len(), b.len()));
    }
    if a.len() < 2 {
        return invalid("correlation needs at least two points");
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let constant = |s: &[f64]| s.iter().all(|&x| x == s[0]);
    if saa == 0.0 || sbb == 0.0 || constant(a) || constant(b) {
        return Err(Error::Numeric("correlation undefined for a constant series".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Silverman's rule-of-thumb bandwidth for a set of positions (e.g. coding
/// sequence starts expressed in window units).
pub fn silverman_bandwidth(positions: &[f64]) -> Result<f64> {
    if positions.len() < 2 {
        return invalid("bandwidth estimation needs at least two positions");
    }
    let n = positions.len() as f64;
    let mean = positions.iter().sum::<f64>() / n;
    let sd = (positions.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = positions.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if spread <= 0.0 {
        return Err(Error::Numeric("positions have zero spread".into()));
    }
    Ok(0.9 * spread * n.powf(-0.2))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_series_unchanged() {
        let s = vec![3.25; 57];
        for r in [0.5, 2.0, 10.0, 40.0] {
            let out = gaussian_smooth(&s, r).unwrap();
            assert!(out.iter().all(|x| (x - 3.25).abs() < 1e-12));
        }
    }

    #[test]
    fn impulse_gives_sampled_gaussian() {
        let r = 3.0;
        let mut s = vec![0.0; 101];
        s[50] = 1.0;
        let out = gaussian_smooth(&s, r).unwrap();
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let half = (4.0 * r).ceil() as i64;
        let norm: f64 = (-half..=half).map(|x| (-0.5 * (x as f64 / r).powi(2)).exp()).sum();
        for (i, y) in out.iter().enumerate() {
            let x = i as i64 - 50;
            let expected = if x.abs() <= half {
                (-0.5 * (x as f64 / r).powi(2)).exp() / norm
            } else {
                0.0
            };
            assert!((y - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn tiny_radius_is_identity() {
        let s: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        let out = gaussian_smooth(&s, 1e-6).unwrap();
        for (a, b) in s.iter().zip(&out) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(gaussian_smooth(&[1.0, 2.0], 0.0).is_err());
        assert!(gaussian_smooth(&[1.0, 2.0], -1.0).is_err());
        assert!(gaussian_smooth(&[], 1.0).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.5, 3.0, 7.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        // means 2 and 13/3; sab = 5, saa = 2, sbb = 38/3
        let expected = 5.0 / (2.0f64.sqrt() * (38.0f64 / 3.0).sqrt());
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 7.0]).unwrap();
        assert!((r - expected).abs() < 1e-14);
        assert!((r - 0.9934).abs() < 1e-3);
    }

    #[test]
    fn pearson_errors() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn silverman_on_normal_like_sample() {
        let pos: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let h = silverman_bandwidth(&pos).unwrap();
        assert!(h > 0.0 && h < 30.0);
        assert!(silverman_bandwidth(&[1.0, 1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn pearson_affine_invariant(
            a in prop::collection::vec(-100.0f64..100.0, 3..40),
            slope in 0.01f64..50.0,
            offset in -100.0f64..100.0,
        ) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * 0.3 + (i as f64).sin()).collect();
            let (Ok(r), Ok(r2)) = (pearson(&a, &b), pearson(&a.iter().map(|x| slope * x + offset).collect::<Vec<_>>(), &b)) else {
                return Ok(());
            };
            prop_assert!((r - r2).abs() < 1e-12);
        }

        #[test]
        fn smoothing_is_linear(
            a in prop::collection::vec(-10.0f64..10.0, 1..80),
            radius in 0.3f64..12.0,
        ) {
            let b: Vec<f64> = a.iter().rev().copied().collect();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = gaussian_smooth(&sum, radius).unwrap();
            let sa = gaussian_smooth(&a, radius).unwrap();
            let sb = gaussian_smooth(&b, radius).unwrap();
            for i in 0..a.len() {
                prop_assert!((lhs[i] - sa[i] - sb[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn smoothing_preserves_mean_away_from_edges(
            bumps in prop::collection::vec(-5.0f64..5.0, 1..20),
            radius in 0.5f64..4.0,
            level in -3.0f64..3.0,
        ) {
            // Deviations stay clear of every output position whose kernel is cut at an end.
            let margin = 2 * (4.0 * radius).ceil() as usize + 1;
            let len = (20.0 * radius).ceil() as usize + 2 * margin + bumps.len();
            let mut s = vec![level; len];
            for (i, b) in bumps.iter().enumerate() {
                s[margin + i] += b;
            }
            let out = gaussian_smooth(&s, radius).unwrap();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            prop_assert!((mean(&s) - mean(&out)).abs() < 1e-9);
        }
    }
}
