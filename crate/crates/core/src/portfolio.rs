//! Daily cross-sectional normalization and dollar-neutral position books.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ForecastPanel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioConfig {
    /// Sum of absolute dollar positions on every rebalance.
    pub gross_target: f64,
    /// Clip z-scores to `±clip` (then re-center). Off by default.
    pub clip_zscore: Option<f64>,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        PortfolioConfig {
            gross_target: 1_000_000.0,
            clip_zscore: None,
        }
    }
}

fn mean_and_population_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn standardize(values: &mut [f64]) -> bool {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mean, sd) = mean_and_population_sd(values);
    if !sd.is_finite() || sd <= 8.0 * f64::EPSILON * scale {
        return false;
    }
    values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    // Second pass removes the rounding left by the first.
    let (mean, sd) = mean_and_population_sd(values);
    values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    true
}

/// Z-scores one day's forecasts: mean 0, population standard deviation 1.
///
/// Non-finite forecasts are ignored. Fewer than two names, or no
/// dispersion, yields an empty map (no positions that day).
pub fn normalize_cross_section(forecasts: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    normalize_with_clip(forecasts, None)
}

pub fn normalize_with_clip(
    forecasts: &BTreeMap<String, f64>,
    clip: Option<f64>,
) -> BTreeMap<String, f64> {
    let (names, mut values): (Vec<&String>, Vec<f64>) = forecasts
        .iter()
        .filter(|(_, v)| v.is_finite())
        .map(|(k, v)| (k, *v))
        .unzip();
    if values.len() < 2 || !standardize(&mut values) {
        return BTreeMap::new();
    }
    if let Some(limit) = clip {
        values.iter_mut().for_each(|v| *v = v.clamp(-limit, limit));
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter_mut().for_each(|v| *v -= mean);
    }
    names.into_iter().cloned().zip(values).collect()
}

/// Signed dollar positions for one rebalance date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionBook {
    pub date: NaiveDate,
    pub zscores: BTreeMap<String, f64>,
    pub positions: BTreeMap<String, f64>,
}

impl PositionBook {
    pub fn gross(&self) -> f64 {
        self.positions.values().map(|p| p.abs()).sum()
    }

    pub fn net(&self) -> f64 {
        self.positions.values().sum()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Multiplies every position by `factor`.
    pub fn scaled(&self, factor: f64) -> PositionBook {
        PositionBook {
            date: self.date,
            zscores: self.zscores.clone(),
            positions: self
                .positions
                .iter()
                .map(|(k, v)| (k.clone(), v * factor))
                .collect(),
        }
    }
}

/// `position_i = gross_target * z_i / sum_j |z_j|`.
pub fn build_positions(
    date: NaiveDate,
    zscores: &BTreeMap<String, f64>,
    gross_target: f64,
) -> Result<PositionBook> {
    if zscores.is_empty() {
        return Err(Error::EmptyInput("z-scores"));
    }
    let total: f64 = zscores.values().map(|z| z.abs()).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::EmptyInput("z-scores are all zero"));
    }
    let positions = zscores
        .iter()
        .map(|(k, z)| (k.clone(), gross_target * z / total))
        .collect();
    Ok(PositionBook {
        date,
        zscores: zscores.clone(),
        positions,
    })
}

/// One book per panel date with a usable cross-section. Each book sees
/// only that date's forecasts.
pub fn rebalance_schedule(
    panel: &ForecastPanel,
    config: &PortfolioConfig,
) -> BTreeMap<NaiveDate, PositionBook> {
    panel
        .iter()
        .filter_map(|(date, points)| {
            let raw: BTreeMap<String, f64> = points
                .iter()
                .map(|(k, p)| (k.clone(), p.raw_forecast))
                .collect();
            let z = normalize_with_clip(&raw, config.clip_zscore);
            if z.is_empty() {
                return None;
            }
            build_positions(*date, &z, config.gross_target)
                .ok()
                .map(|b| (*date, b))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::signal::ForecastPoint;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn day(n: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 3, n).unwrap()
    }

    #[test]
    fn three_name_zscores() {
        let z = normalize_cross_section(&map(&[("A", 1.0), ("B", 2.0), ("C", 3.0)]));
        let k = 1.5f64.sqrt();
        assert!((z["A"] + k).abs() < 1e-15);
        assert!(z["B"].abs() < 1e-15);
        assert!((z["C"] - k).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cross_sections() {
        assert!(normalize_cross_section(&map(&[("A", 5.0), ("B", 5.0)])).is_empty());
        assert!(normalize_cross_section(&map(&[("A", 5.0)])).is_empty());
        assert!(normalize_cross_section(&map(&[("A", 5.0), ("B", f64::NAN)])).is_empty());
        assert_eq!(
            normalize_cross_section(&map(&[("A", 1.0), ("B", 2.0), ("C", f64::NAN)])).len(),
            2
        );
    }

    #[test]
    fn three_name_positions() {
        let k = 1.5f64.sqrt();
        let book = build_positions(day(1), &map(&[("A", -k), ("B", 0.0), ("C", k)]), 1e6).unwrap();
        assert!((book.positions["A"] + 500_000.0).abs() < 1e-9);
        assert_eq!(book.positions["B"], 0.0);
        assert!((book.positions["C"] - 500_000.0).abs() < 1e-9);
        assert!(build_positions(day(1), &BTreeMap::new(), 1e6).is_err());
    }

    #[test]
    fn clipping_keeps_book_neutral() {
        let mut raw = map(&[("OUT", 50.0)]);
        for i in 0..20 {
            raw.insert(format!("N{i}"), (i as f64) * 0.1);
        }
        let unclipped = normalize_cross_section(&raw);
        let z = normalize_with_clip(&raw, Some(3.0));
        assert!(unclipped["OUT"] > 4.0);
        assert!(z["OUT"] < 3.5);
        assert!(z.values().sum::<f64>().abs() < 1e-12);
        let book = build_positions(day(1), &z, 1e6).unwrap();
        assert!(book.net().abs() / book.gross() < 1e-8);
    }

    fn panel_from(days: &[(NaiveDate, &[(&str, f64)])]) -> ForecastPanel {
        let mut panel = ForecastPanel::default();
        for (date, pts) in days {
            for (id, f) in pts.iter() {
                panel
                    .insert(ForecastPoint {
                        instrument_id: id.to_string(),
                        date: *date,
                        close: 1.0,
                        c_kalman: 1.0,
                        raw_forecast: *f,
                    })
                    .unwrap();
            }
        }
        panel
    }

    #[test]
    fn schedule_skips_degenerate_days_and_ignores_future() {
        let panel = panel_from(&[
            (day(1), &[("A", 0.1), ("B", -0.2), ("C", 0.05)]),
            (day(2), &[("A", 0.3), ("B", 0.3)]),
            (day(3), &[("A", 0.2), ("B", -0.1)]),
            (day(4), &[("A", -0.4), ("B", 0.9), ("C", 0.0)]),
        ]);
        let full = rebalance_schedule(&panel, &PortfolioConfig::default());
        assert_eq!(full.keys().copied().collect::<Vec<_>>(), vec![day(1), day(3), day(4)]);
        let cut = rebalance_schedule(&panel.truncated(day(3)), &PortfolioConfig::default());
        assert_eq!(cut[&day(3)], full[&day(3)]);
        assert_eq!(cut[&day(1)], full[&day(1)]);
    }

    #[test]
    fn schedule_is_insertion_order_independent() {
        let a = panel_from(&[(day(1), &[("A", 0.1), ("B", -0.2), ("C", 0.05)])]);
        let b = panel_from(&[(day(1), &[("C", 0.05), ("A", 0.1), ("B", -0.2)])]);
        let cfg = PortfolioConfig::default();
        assert_eq!(rebalance_schedule(&a, &cfg), rebalance_schedule(&b, &cfg));
    }

    proptest! {
        #[test]
        fn normalized_moments(values in proptest::collection::vec(-1.0f64..1.0, 2..200), shift in -10.0f64..10.0) {
            let raw: BTreeMap<String, f64> = values.iter().enumerate().map(|(i, v)| (format!("I{i:03}"), *v)).collect();
            let z = normalize_cross_section(&raw);
            prop_assume!(!z.is_empty());
            let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
            let n = z.len() as f64;
            let mean = z.values().sum::<f64>() / n;
            let sd = (z.values().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-12);
            prop_assert!((sd - 1.0).abs() < 1e-12);

            let shifted: BTreeMap<String, f64> = raw.iter().map(|(k, v)| (k.clone(), v + shift)).collect();
            let zs = normalize_cross_section(&shifted);
            prop_assume!(spread > 1e-3);
            for (k, v) in &z {
                prop_assert!((zs[k] - v).abs() < 1e-6);
            }
        }

        #[test]
        fn book_gross_neutrality_and_homogeneity(values in proptest::collection::vec(-1.0f64..1.0, 2..100), gross in 1.0f64..1e9) {
            let raw: BTreeMap<String, f64> = values.iter().enumerate().map(|(i, v)| (format!("I{i:03}"), *v)).collect();
            let z = normalize_cross_section(&raw);
            prop_assume!(!z.is_empty());
            let book = build_positions(day(1), &z, gross).unwrap();
            prop_assert!(((book.gross() - gross) / gross).abs() < 1e-9);
            prop_assert!(book.net().abs() / book.gross() < 1e-8);
            for (k, p) in &book.positions {
                prop_assert!(*p == 0.0 || p.signum() == z[k].signum());
            }
            let doubled = build_positions(day(1), &z, 2.0 * gross).unwrap();
            for (k, p) in &book.positions {
                prop_assert_eq!(doubled.positions[k], 2.0 * p);
            }
        }
    }
}
