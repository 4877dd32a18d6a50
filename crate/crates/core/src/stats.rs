//! 2×2 contingency tables and odds ratios.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::classify::{CategoryRules, RecordCategory, VerdictRow, VerdictStatus};
use crate::records::Window;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("odds ratio undefined: b*c = 0")]
    DivisionByZero,
    #[error("interval undefined: a cell is zero")]
    ZeroCell,
    #[error("confidence level must lie in [0, 1), got {0}")]
    InvalidLevel(f64),
}

/// Exposure is Outdated or EarlierOutdated; the event is a bug-introducing
/// commit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContingencyTable {
    /// Exposed and bug-introducing.
    pub a: u64,
    /// Not exposed and bug-introducing.
    pub b: u64,
    /// Exposed, no bug.
    pub c: u64,
    /// Not exposed, no bug.
    pub d: u64,
}

impl ContingencyTable {
    pub const fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        ContingencyTable { a, b, c, d }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    fn cells(&self, zero_correction: bool) -> [f64; 4] {
        let raw = [self.a, self.b, self.c, self.d].map(|x| x as f64);
        if zero_correction && raw.contains(&0.0) {
            raw.map(|x| x + 0.5)
        } else {
            raw
        }
    }
}

impl Add for ContingencyTable {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ContingencyTable::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl Sum for ContingencyTable {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    /// Haldane-Anscombe correction when any cell is zero.
    pub zero_correction: bool,
    /// Count UncategorizedInconsistent records as exposed instead of
    /// dropping them.
    pub uncategorized_as_exposed: bool,
    pub categories: CategoryRules,
}

/// `Some(true)` exposed, `Some(false)` unexposed, `None` excluded.
pub fn exposure(category: RecordCategory, uncategorized_as_exposed: bool) -> Option<bool> {
    match category {
        RecordCategory::Outdated | RecordCategory::EarlierOutdated => Some(true),
        RecordCategory::Normal => Some(false),
        RecordCategory::UncategorizedInconsistent => uncategorized_as_exposed.then_some(true),
    }
}

pub fn tabulate(
    records: impl IntoIterator<Item = (RecordCategory, bool)>,
    uncategorized_as_exposed: bool,
) -> ContingencyTable {
    let mut t = ContingencyTable::default();
    for (cat, bug) in records {
        match (exposure(cat, uncategorized_as_exposed), bug) {
            (Some(true), true) => t.a += 1,
            (Some(false), true) => t.b += 1,
            (Some(true), false) => t.c += 1,
            (Some(false), false) => t.d += 1,
            (None, _) => {}
        }
    }
    t
}

pub fn odds_ratio(t: &ContingencyTable, zero_correction: bool) -> Result<f64, StatsError> {
    let [a, b, c, d] = t.cells(zero_correction);
    if b * c == 0.0 {
        return Err(StatsError::DivisionByZero);
    }
    Ok((a * d) / (b * c))
}

/// Wald interval on the log odds ratio.
pub fn confidence_interval(
    t: &ContingencyTable,
    level: f64,
    zero_correction: bool,
) -> Result<(f64, f64), StatsError> {
    if !(0.0..1.0).contains(&level) {
        return Err(StatsError::InvalidLevel(level));
    }
    let cells = t.cells(zero_correction);
    if cells.contains(&0.0) {
        return Err(StatsError::ZeroCell);
    }
    let or = odds_ratio(t, zero_correction)?;
    let se = cells.iter().map(|x| 1.0 / x).sum::<f64>().sqrt();
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let ln = or.ln();
    Ok(((ln - z * se).exp(), (ln + z * se).exp()))
}

/// One table with its statistics; undefined values are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableResult {
    #[serde(flatten)]
    pub table: ContingencyTable,
    pub odds_ratio: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl TableResult {
    pub fn new(table: ContingencyTable, level: f64, zero_correction: bool) -> Self {
        let ci = confidence_interval(&table, level, zero_correction).ok();
        TableResult {
            table,
            odds_ratio: odds_ratio(&table, zero_correction).ok(),
            ci_low: ci.map(|c| c.0),
            ci_high: ci.map(|c| c.1),
        }
    }
}

/// One odds ratio per window, each from its own table. Windows keep input
/// order.
pub fn weekly_comparison(
    records_by_window: &[(Window, Vec<(RecordCategory, bool)>)],
    opts: AnalysisOptions,
) -> Vec<(Window, ContingencyTable, Result<f64, StatsError>)> {
    records_by_window
        .iter()
        .map(|(w, recs)| {
            let t = tabulate(recs.iter().copied(), opts.uncategorized_as_exposed);
            (*w, t, odds_ratio(&t, opts.zero_correction))
        })
        .collect()
}

/// Cellwise sum.
pub fn pool<'a>(tables: impl IntoIterator<Item = &'a ContingencyTable>) -> ContingencyTable {
    tables.into_iter().copied().sum()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowCounts {
    pub classified: u64,
    pub unclassified: u64,
    /// Classified but outside every configured window.
    pub outside_windows: u64,
    /// Classified, inside a window, dropped as UncategorizedInconsistent.
    pub excluded_uncategorized: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoResult {
    pub repo: String,
    #[serde(flatten)]
    pub result: TableResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window: String,
    pub lo: f64,
    pub hi: f64,
    pub per_repo: Vec<RepoResult>,
    pub total: TableResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub confidence_level: f64,
    pub options: AnalysisOptions,
    pub counts: RowCounts,
    pub windows: Vec<WindowResult>,
}

/// Per-repo and pooled tables for each window from a verdicts file.
pub fn analyze(rows: &[VerdictRow], windows: &[Window], level: f64, opts: AnalysisOptions) -> Analysis {
    let mut counts = RowCounts::default();
    let mut cells: Vec<BTreeMap<&str, Vec<(RecordCategory, bool)>>> = vec![BTreeMap::new(); windows.len()];
    for row in rows {
        let cat = match (row.status, row.category(opts.categories)) {
            (VerdictStatus::Classified, Some(cat)) => cat,
            _ => {
                counts.unclassified += 1;
                continue;
            }
        };
        counts.classified += 1;
        let Some(i) = windows.iter().position(|w| w.contains(row.window_days_back)) else {
            counts.outside_windows += 1;
            continue;
        };
        if exposure(cat, opts.uncategorized_as_exposed).is_none() {
            counts.excluded_uncategorized += 1;
        }
        cells[i]
            .entry(row.repo_name.as_str())
            .or_default()
            .push((cat, row.is_bug_introducing));
    }

    let windows = windows
        .iter()
        .zip(cells)
        .map(|(w, by_repo)| {
            let per_repo: Vec<RepoResult> = by_repo
                .into_iter()
                .map(|(repo, recs)| RepoResult {
                    repo: repo.to_string(),
                    result: TableResult::new(
                        tabulate(recs, opts.uncategorized_as_exposed),
                        level,
                        opts.zero_correction,
                    ),
                })
                .collect();
            let total = pool(per_repo.iter().map(|r| &r.result.table));
            WindowResult {
                window: w.to_string(),
                lo: w.lo,
                hi: w.hi,
                per_repo,
                total: TableResult::new(total, level, opts.zero_correction),
            }
        })
        .collect();
    Analysis {
        confidence_level: level,
        options: opts,
        counts,
        windows,
    }
}

/// Name used for pooled rows in reports.
pub const TOTAL_LABEL: &str = "total";

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.9}"))
}

impl Analysis {
    /// Columns: repo, window, a, b, c, d, odds_ratio, ci_low, ci_high.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("repo,window,a,b,c,d,odds_ratio,ci_low,ci_high\n");
        for w in &self.windows {
            let rows = w
                .per_repo
                .iter()
                .map(|r| (r.repo.as_str(), &r.result))
                .chain([(TOTAL_LABEL, &w.total)]);
            for (repo, r) in rows {
                let t = r.table;
                let _ = writeln!(
                    out,
                    "{},\"{}\",{},{},{},{},{},{},{}",
                    csv_field(repo),
                    w.window,
                    t.a,
                    t.b,
                    t.c,
                    t.d,
                    fmt_opt(r.odds_ratio),
                    fmt_opt(r.ci_low),
                    fmt_opt(r.ci_high)
                );
            }
        }
        out
    }

    /// Aligned text tables, one per window, then a per-repo comparison of
    /// odds ratios across windows.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let c = &self.counts;
        let _ = writeln!(
            out,
            "records: {} classified, {} unclassified, {} outside windows, {} uncategorized excluded\n",
            c.classified, c.unclassified, c.outside_windows, c.excluded_uncategorized
        );
        for w in &self.windows {
            let _ = writeln!(out, "window {} days", w.window);
            let _ = writeln!(
                out,
                "{:<24} {:>9} {:>9} {:>9} {:>9} {:>14}",
                "repo", "a", "b", "c", "d", "odds_ratio"
            );
            let rows = w
                .per_repo
                .iter()
                .map(|r| (r.repo.as_str(), &r.result))
                .chain([(TOTAL_LABEL, &w.total)]);
            for (repo, r) in rows {
                let t = r.table;
                let _ = writeln!(
                    out,
                    "{:<24} {:>9} {:>9} {:>9} {:>9} {:>14}",
                    repo,
                    t.a,
                    t.b,
                    t.c,
                    t.d,
                    fmt_opt(r.odds_ratio)
                );
            }
            out.push('\n');
        }
        if self.windows.len() > 1 {
            let _ = write!(out, "{:<24}", "odds ratio by window");
            for w in &self.windows {
                let _ = write!(out, " {:>14}", w.window);
            }
            out.push('\n');
            let mut repos: Vec<&str> = self
                .windows
                .iter()
                .flat_map(|w| w.per_repo.iter().map(|r| r.repo.as_str()))
                .collect();
            repos.sort_unstable();
            repos.dedup();
            repos.push(TOTAL_LABEL);
            for repo in repos {
                let _ = write!(out, "{repo:<24}");
                for w in &self.windows {
                    let or = if repo == TOTAL_LABEL {
                        w.total.odds_ratio
                    } else {
                        w.per_repo
                            .iter()
                            .find(|r| r.repo == repo)
                            .and_then(|r| r.result.odds_ratio)
                    };
                    let _ = write!(out, " {:>14}", fmt_opt(or));
                }
                out.push('\n');
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use RecordCategory::*;

    #[test]
    fn tabulate_examples() {
        assert_eq!(tabulate([], false), ContingencyTable::new(0, 0, 0, 0));
        assert_eq!(
            tabulate([(Outdated, true), (Normal, false)], false),
            ContingencyTable::new(1, 0, 0, 1)
        );
        // Hand count: exposed bug = rows 1,2; normal bug = 3; exposed clean = 4;
        // normal clean = 5; row 6 is dropped.
        let six = [
            (Outdated, true),
            (EarlierOutdated, true),
            (Normal, true),
            (Outdated, false),
            (Normal, false),
            (UncategorizedInconsistent, true),
        ];
        assert_eq!(tabulate(six, false), ContingencyTable::new(2, 1, 1, 1));
        assert_eq!(tabulate(six, true), ContingencyTable::new(3, 1, 1, 1));
    }

    #[test]
    fn odds_ratio_examples() {
        let total = ContingencyTable::new(5067, 34183, 3313, 33962);
        assert_abs_diff_eq!(odds_ratio(&total, false).unwrap(), 1.519541449, epsilon = 1e-6);
        assert_eq!(odds_ratio(&ContingencyTable::new(1, 1, 1, 1), false).unwrap(), 1.0);
        let z = ContingencyTable::new(0, 10, 10, 10);
        assert_abs_diff_eq!(odds_ratio(&z, true).unwrap(), 0.5 * 10.5 / (10.5 * 10.5), epsilon = 1e-12);
        assert_abs_diff_eq!(odds_ratio(&z, true).unwrap(), 0.047619, epsilon = 1e-6);
        assert_eq!(
            odds_ratio(&ContingencyTable::new(3, 0, 2, 1), false),
            Err(StatsError::DivisionByZero)
        );
        // a = 0 is fine without correction: OR is 0.
        assert_eq!(odds_ratio(&z, false), Ok(0.0));
    }

    #[test]
    fn interval_examples() {
        let t = ContingencyTable::new(10, 10, 10, 10);
        let (lo, hi) = confidence_interval(&t, 0.95, false).unwrap();
        // se = sqrt(4/10); z(0.975) = 1.959963984540054.
        let half = 1.959963984540054 * (0.4f64).sqrt();
        assert_abs_diff_eq!(lo, (-half).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(hi, half.exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(lo, 0.2895, epsilon = 1e-4);
        assert_abs_diff_eq!(hi, 3.4542, epsilon = 1e-4);
        assert_abs_diff_eq!(lo.ln(), -hi.ln(), epsilon = 1e-12);

        let (lo, hi) = confidence_interval(&t, 0.0, false).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));

        let total = ContingencyTable::new(5067, 34183, 3313, 33962);
        let (lo, hi) = confidence_interval(&total, 0.95, false).unwrap();
        assert!(lo < 1.519541449 && 1.519541449 < hi && lo > 1.0);

        assert_eq!(
            confidence_interval(&ContingencyTable::new(0, 1, 1, 1), 0.95, false),
            Err(StatsError::ZeroCell)
        );
        assert!(confidence_interval(&ContingencyTable::new(0, 1, 1, 1), 0.95, true).is_ok());
        assert!(confidence_interval(&t, 1.0, false).is_err());
    }

    #[test]
    fn weekly_comparison_examples() {
        let repeat = |cat, bug, n| std::iter::repeat_n((cat, bug), n);
        let table = |a, b, c, d| -> Vec<(RecordCategory, bool)> {
            repeat(Outdated, true, a)
                .chain(repeat(Normal, true, b))
                .chain(repeat(Outdated, false, c))
                .chain(repeat(Normal, false, d))
                .collect()
        };
        let recent = Window::new(0.0, 7.0).unwrap();
        let earlier = Window::new(7.0, 14.0).unwrap();
        // Hand-built: recent (8*8)/(2*2) = 16 > 1; earlier (2*2)/(8*8) < 1.
        let out = weekly_comparison(
            &[(recent, table(8, 2, 2, 8)), (earlier, table(2, 8, 8, 2))],
            AnalysisOptions::default(),
        );
        assert_eq!(out[0].2, Ok(16.0));
        assert_eq!(out[1].2, Ok(0.0625));

        let same = table(3, 4, 5, 6);
        let out = weekly_comparison(&[(recent, same.clone()), (earlier, same)], AnalysisOptions::default());
        assert_eq!(out[0].2, out[1].2);

        let row1 = weekly_comparison(&[(recent, table(640, 4208, 405, 4028))], AnalysisOptions::default());
        assert_abs_diff_eq!(*row1[0].2.as_ref().unwrap(), 1.5126508, epsilon = 1e-6);
    }

    fn row(repo: &str, days: f64, bug: bool, verdict: Option<(bool, bool)>, unchanged: bool) -> VerdictRow {
        VerdictRow {
            old_commit: "a".into(),
            new_commit: "b".into(),
            path: "A.java".into(),
            signature_key: "A#f()".into(),
            repo_name: repo.into(),
            is_bug_introducing: bug,
            window_days_back: days,
            comment_unchanged: unchanged,
            status: if verdict.is_some() {
                VerdictStatus::Classified
            } else {
                VerdictStatus::Unclassified
            },
            verdict: verdict.map(|(n, o)| crate::classify::ConsistencyVerdict {
                consistent_with_new_code: n,
                consistent_with_old_code: o,
                rationale: "r".into(),
                source: crate::classify::VerdictSource::Mock,
            }),
            error: None,
        }
    }

    #[test]
    fn analyze_groups_and_counts() {
        let windows = [Window::new(0.0, 7.0).unwrap(), Window::new(7.0, 14.0).unwrap()];
        let rows = vec![
            row("x", 1.0, true, Some((false, true)), true),
            row("x", 7.0, false, Some((true, true)), true),
            row("y", 7.5, true, Some((false, false)), true),
            row("y", 3.0, true, Some((false, false)), false),
            row("y", 3.0, true, None, true),
            row("y", 20.0, true, Some((true, true)), true),
        ];
        let a = analyze(&rows, &windows, 0.95, AnalysisOptions::default());
        assert_eq!(
            a.counts,
            RowCounts {
                classified: 5,
                unclassified: 1,
                outside_windows: 1,
                excluded_uncategorized: 1
            }
        );
        let w0 = &a.windows[0];
        assert_eq!(w0.per_repo.len(), 2);
        assert_eq!(w0.per_repo[0].result.table, ContingencyTable::new(1, 0, 0, 1));
        assert_eq!(w0.per_repo[1].result.table, ContingencyTable::new(0, 0, 0, 0));
        assert_eq!(w0.total.table, ContingencyTable::new(1, 0, 0, 1));
        assert_eq!(w0.total.odds_ratio, None);
        assert_eq!(a.windows[1].total.table, ContingencyTable::new(1, 0, 0, 0));
        let csv = a.to_csv();
        assert!(csv.starts_with("repo,window,a,b,c,d,odds_ratio,ci_low,ci_high\n"));
        assert!(csv.contains("total,\"(0,7]\",1,0,0,1,NA,NA,NA"));
        assert!(a.to_text().contains("odds ratio by window"));
    }

    fn table() -> impl Strategy<Value = ContingencyTable> {
        (1u64..5000, 1u64..5000, 1u64..5000, 1u64..5000).prop_map(|(a, b, c, d)| ContingencyTable::new(a, b, c, d))
    }

    fn category() -> impl Strategy<Value = RecordCategory> {
        prop::sample::select(RecordCategory::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn event_flip_is_reciprocal(t in table()) {
            let flipped = ContingencyTable::new(t.c, t.d, t.a, t.b);
            let p = odds_ratio(&t, false).unwrap() * odds_ratio(&flipped, false).unwrap();
            prop_assert!((p - 1.0).abs() < 1e-9);
        }

        #[test]
        fn scaling_leaves_or_unchanged(t in table(), k in 1u64..50) {
            let s = ContingencyTable::new(t.a * k, t.b * k, t.c * k, t.d * k);
            let (x, y) = (odds_ratio(&t, false).unwrap(), odds_ratio(&s, false).unwrap());
            prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0));
        }

        #[test]
        fn or_above_one_iff_ad_exceeds_bc(t in table()) {
            prop_assert_eq!(odds_ratio(&t, false).unwrap() > 1.0, t.a * t.d > t.b * t.c);
        }

        #[test]
        fn tabulate_is_additive(
            recs in prop::collection::vec((category(), any::<bool>()), 0..200),
            split in 0usize..200,
            include in any::<bool>(),
        ) {
            let split = split.min(recs.len());
            let (left, right) = recs.split_at(split);
            prop_assert_eq!(
                tabulate(recs.iter().copied(), include),
                tabulate(left.iter().copied(), include) + tabulate(right.iter().copied(), include)
            );
        }

        #[test]
        fn interval_brackets_estimate(t in table(), level in 0.5f64..0.999) {
            let or = odds_ratio(&t, false).unwrap();
            let (lo, hi) = confidence_interval(&t, level, false).unwrap();
            prop_assert!(lo <= or * (1.0 + 1e-12) && or <= hi * (1.0 + 1e-12));
        }
    }
}
