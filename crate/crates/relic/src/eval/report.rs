//! Aggregation of evaluation records into the per-language accuracy grid,
//! with a gain row measuring how far the trained pipeline sits above the
//! strongest alternative in each column.

use std::collections::BTreeMap;

use super::{EvalError, EvalRecord, StrategyTag};

/// Accuracy table over every (strategy, language) combination present in
/// the records. Absent combinations have no cell and render as "-".
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Languages seen, lexicographic.
    pub languages: Vec<String>,
    /// Strategies seen, in canonical order.
    pub strategies: Vec<StrategyTag>,
    pub cells: BTreeMap<(StrategyTag, String), f64>,
    /// Per language: trained-pipeline accuracy minus the best of the other
    /// strategies; `None` when either side has no cell.
    pub gains: BTreeMap<String, Option<f64>>,
}

impl Report {
    pub fn accuracy(&self, strategy: StrategyTag, language: &str) -> Option<f64> {
        self.cells.get(&(strategy, language.to_string())).copied()
    }

    /// Aligned text grid: one row per strategy, one column per language,
    /// cells as four-decimal fractions. Deterministic byte for byte.
    pub fn to_table(&self) -> String {
        let fmt_cell = |value: Option<f64>| match value {
            Some(v) => format!("{v:.4}"),
            None => "-".to_string(),
        };
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["strategy".to_string()];
        header.extend(self.languages.iter().cloned());
        rows.push(header);
        for &strategy in &self.strategies {
            let mut row = vec![strategy.to_string()];
            row.extend(
                self.languages
                    .iter()
                    .map(|language| fmt_cell(self.accuracy(strategy, language))),
            );
            rows.push(row);
        }
        if self.strategies.contains(&StrategyTag::Relic) {
            let mut row = vec!["gain".to_string()];
            row.extend(
                self.languages
                    .iter()
                    .map(|language| fmt_cell(self.gains.get(language).copied().flatten())),
            );
            rows.push(row);
        }
        let columns = rows[0].len();
        let width = |col: usize| rows.iter().map(|r| r[col].len()).max().unwrap_or(0);
        let widths: Vec<usize> = (0..columns).map(width).collect();
        let mut out = String::new();
        for row in &rows {
            for (col, cell) in row.iter().enumerate() {
                if col > 0 {
                    out.push_str("  ");
                }
                if col + 1 == columns {
                    out.push_str(cell);
                } else {
                    out.push_str(&format!("{cell:<w$}", w = widths[col]));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Groups records into per-cell accuracies. Every cell is a plain mean of
/// correct flags, so merge order cannot affect the table.
pub fn build_report(records: &[EvalRecord]) -> Result<Report, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let mut tallies: BTreeMap<(StrategyTag, String), (usize, usize)> = BTreeMap::new();
    for record in records {
        let cell = tallies
            .entry((record.strategy, record.language.clone()))
            .or_default();
        cell.0 += usize::from(record.correct);
        cell.1 += 1;
    }
    let cells: BTreeMap<(StrategyTag, String), f64> = tallies
        .into_iter()
        .map(|(key, (wins, total))| (key, wins as f64 / total as f64))
        .collect();
    let mut languages: Vec<String> = cells.keys().map(|(_, l)| l.clone()).collect();
    languages.sort();
    languages.dedup();
    let strategies: Vec<StrategyTag> = StrategyTag::ALL
        .into_iter()
        .filter(|s| cells.keys().any(|(cs, _)| cs == s))
        .collect();
    let gains = languages
        .iter()
        .map(|language| {
            let relic = cells.get(&(StrategyTag::Relic, language.clone()));
            let best_other = strategies
                .iter()
                .filter(|&&s| s != StrategyTag::Relic)
                .filter_map(|&s| cells.get(&(s, language.clone())))
                .cloned()
                .reduce(f64::max);
            let gain = match (relic, best_other) {
                (Some(r), Some(b)) => Some(r - b),
                _ => None,
            };
            (language.clone(), gain)
        })
        .collect();
    Ok(Report {
        languages,
        strategies,
        cells,
        gains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(strategy: StrategyTag, language: &str, correct: bool) -> EvalRecord {
        let (sp, sr) = if correct { (1.0, 0.0) } else { (0.0, 1.0) };
        EvalRecord::new("p", language, strategy, sp, sr)
    }

    fn sample_records() -> Vec<EvalRecord> {
        let mut records = Vec::new();
        // sw: relic 3/4, random 1/2, zero_shot 1/4.
        for correct in [true, true, true, false] {
            records.push(record(StrategyTag::Relic, "sw", correct));
        }
        for correct in [true, false] {
            records.push(record(StrategyTag::Random, "sw", correct));
        }
        for correct in [true, false, false, false] {
            records.push(record(StrategyTag::ZeroShot, "sw", correct));
        }
        // am: random only.
        records.push(record(StrategyTag::Random, "am", true));
        records
    }

    #[test]
    fn cells_hold_per_language_per_strategy_accuracy() {
        let report = build_report(&sample_records()).unwrap();
        assert_eq!(report.languages, vec!["am".to_string(), "sw".to_string()]);
        assert_eq!(
            report.strategies,
            vec![StrategyTag::ZeroShot, StrategyTag::Random, StrategyTag::Relic]
        );
        assert_eq!(report.accuracy(StrategyTag::Relic, "sw"), Some(0.75));
        assert_eq!(report.accuracy(StrategyTag::Random, "sw"), Some(0.5));
        assert_eq!(report.accuracy(StrategyTag::ZeroShot, "sw"), Some(0.25));
        assert_eq!(report.accuracy(StrategyTag::Random, "am"), Some(1.0));
        assert_eq!(report.accuracy(StrategyTag::Relic, "am"), None);
        assert!(report.cells.values().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn gain_is_relic_minus_the_best_other_strategy() {
        let report = build_report(&sample_records()).unwrap();
        let gain = report.gains.get("sw").copied().flatten().unwrap();
        assert!((gain - 0.25).abs() < 1e-12);
        assert_eq!(report.gains.get("am").copied().flatten(), None);
    }

    #[test]
    fn gain_can_be_negative() {
        let records = vec![
            record(StrategyTag::Relic, "sw", false),
            record(StrategyTag::Random, "sw", true),
        ];
        let report = build_report(&records).unwrap();
        let gain = report.gains.get("sw").copied().flatten().unwrap();
        assert!((gain + 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_is_aligned_and_stable_under_record_order() {
        let records = sample_records();
        let table = build_report(&records).unwrap().to_table();
        let mut shuffled = records.clone();
        shuffled.rotate_left(5);
        shuffled.reverse();
        assert_eq!(build_report(&shuffled).unwrap().to_table(), table);
        let expected = "\
strategy   am      sw
zero_shot  -       0.2500
random     1.0000  0.5000
relic      -       0.7500
gain       -       0.2500
";
        assert_eq!(table, expected);
    }

    #[test]
    fn reports_without_the_trained_strategy_skip_the_gain_row() {
        let records = vec![record(StrategyTag::Random, "sw", true)];
        let report = build_report(&records).unwrap();
        let table = report.to_table();
        assert!(!table.contains("gain"));
        assert_eq!(report.gains.get("sw").copied().flatten(), None);
    }

    #[test]
    fn empty_record_sets_are_rejected() {
        assert!(matches!(build_report(&[]), Err(EvalError::EmptyRecords)));
    }
}
