//! Result files and the summaries drawn from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::MetricsRecord;
use crate::error::{Error, Result};
use crate::storage::{weighted_breakdown, CostWeights, EventLedger};
use crate::workload::Correlation;

pub fn write_csv(path: impl AsRef<Path>, rows: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<MetricsRecord>, _>>()?;
    for row in &rows {
        if !(0.0..=1.0).contains(&row.recall) {
            return Err(Error::Malformed(format!("recall {} outside [0, 1]", row.recall)));
        }
    }
    Ok(rows)
}

/// Which side of the filter-first / traversal-first divide a strategy sits
/// on, judged by its name prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    FilterFirst,
    TraversalFirst,
    Partition,
}

impl Family {
    pub fn of(strategy: &str) -> Option<Family> {
        let s = strategy.to_ascii_lowercase();
        if s.starts_with("acorn") || s.starts_with("navix") {
            Some(Family::FilterFirst)
        } else if s.starts_with("sweeping") || s.starts_with("iterative") {
            Some(Family::TraversalFirst)
        } else if s.starts_with("scann") {
            Some(Family::Partition)
        } else {
            None
        }
    }
}

/// Repetitions of one (strategy, k, selectivity, correlation) folded together.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub strategy: String,
    pub k: usize,
    pub selectivity: f64,
    pub correlation: Correlation,
    pub knobs: String,
    pub recall: f64,
    pub qps: f64,
    pub mean_latency_us: f64,
    /// Counts of the first repetition; counts do not vary across repetitions.
    pub ledger: EventLedger,
    pub repetitions: usize,
}

pub fn summarize(rows: &[MetricsRecord]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<(String, usize, u64, Correlation), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.strategy.clone(), r.k, r.selectivity.to_bits(), r.correlation))
            .or_default()
            .push(r);
    }
    let mut out: Vec<CellSummary> = groups
        .into_values()
        .map(|g| {
            let n = g.len() as f64;
            let first = g[0];
            CellSummary {
                strategy: first.strategy.clone(),
                k: first.k,
                selectivity: first.selectivity,
                correlation: first.correlation,
                knobs: first.knobs.clone(),
                recall: g.iter().map(|r| r.recall).sum::<f64>() / n,
                qps: g.iter().map(|r| r.qps).sum::<f64>() / n,
                mean_latency_us: g.iter().map(|r| r.mean_latency_us).sum::<f64>() / n,
                ledger: first.ledger(),
                repetitions: g.len(),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (a.correlation, a.k)
            .cmp(&(b.correlation, b.k))
            .then(a.selectivity.total_cmp(&b.selectivity))
            .then(a.strategy.cmp(&b.strategy))
    });
    out
}

/// Weighted cost shares per counter, in ledger field order.
pub fn breakdown_shares(ledger: &EventLedger, weights: &CostWeights) -> [f64; 8] {
    weighted_breakdown(ledger, weights).fractions()
}

/// Smallest selectivity at which the best traversal-first strategy beats
/// the best filter-first strategy on QPS.
pub fn crossover(summaries: &[CellSummary], correlation: Correlation, k: usize) -> Option<f64> {
    let mut by_sel: BTreeMap<u64, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for s in summaries.iter().filter(|s| s.correlation == correlation && s.k == k) {
        let e = by_sel.entry(s.selectivity.to_bits()).or_default();
        let slot = match Family::of(&s.strategy) {
            Some(Family::FilterFirst) => &mut e.0,
            Some(Family::TraversalFirst) => &mut e.1,
            _ => continue,
        };
        *slot = Some(slot.map_or(s.qps, |q: f64| q.max(s.qps)));
    }
    let mut sels: Vec<(f64, f64, f64)> = by_sel
        .into_iter()
        .filter_map(|(s, (ff, tf))| Some((f64::from_bits(s), ff?, tf?)))
        .collect();
    sels.sort_by(|a, b| a.0.total_cmp(&b.0));
    sels.into_iter().find(|&(_, ff, tf)| tf > ff).map(|(s, _, _)| s)
}

const SHORT: [&str; 8] = ["page", "mat", "map", "filter", "dist", "hop", "leaf", "reorder"];
const COLORS: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

/// Plain-text tables: QPS by selectivity per strategy, the crossover point,
/// and weighted cost shares.
pub fn render_report(rows: &[MetricsRecord], weights: &CostWeights) -> String {
    let sums = summarize(rows);
    let mut groups: BTreeMap<(Correlation, usize), Vec<&CellSummary>> = BTreeMap::new();
    for s in &sums {
        groups.entry((s.correlation, s.k)).or_default().push(s);
    }
    let mut out = String::new();
    for ((corr, k), cells) in groups {
        let strategies: Vec<&str> = {
            let mut v: Vec<&str> = cells.iter().map(|c| c.strategy.as_str()).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let _ = writeln!(out, "## correlation={corr} k={k}\n");
        let _ = write!(out, "{:>11}", "selectivity");
        for s in &strategies {
            let _ = write!(out, " {s:>14}");
        }
        out.push('\n');
        let mut sels: Vec<f64> = cells.iter().map(|c| c.selectivity).collect();
        sels.sort_by(f64::total_cmp);
        sels.dedup();
        for sel in &sels {
            let _ = write!(out, "{sel:>11}");
            for s in &strategies {
                match cells.iter().find(|c| c.selectivity == *sel && c.strategy == *s) {
                    Some(c) => {
                        let _ = write!(out, " {:>14.1}", c.qps);
                    }
                    None => {
                        let _ = write!(out, " {:>14}", "-");
                    }
                }
            }
            out.push('\n');
        }
        match crossover(&sums, corr, k) {
            Some(s) => {
                let _ = writeln!(out, "\ncrossover: {s}");
            }
            None => out.push_str("\ncrossover: none\n"),
        }
        let _ = write!(out, "\n{:>14} {:>11}", "strategy", "selectivity");
        for h in SHORT {
            let _ = write!(out, " {h:>7}");
        }
        out.push('\n');
        for c in &cells {
            let _ = write!(out, "{:>14} {:>11}", c.strategy, c.selectivity);
            for f in breakdown_shares(&c.ledger, weights) {
                let _ = write!(out, " {:>6.1}%", 100.0 * f);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Stacked horizontal bars of weighted cost shares, one bar per
/// (strategy, selectivity) of the given correlation and k.
pub fn breakdown_svg(summaries: &[CellSummary], weights: &CostWeights, correlation: Correlation, k: usize) -> String {
    let cells: Vec<&CellSummary> = summaries
        .iter()
        .filter(|s| s.correlation == correlation && s.k == k)
        .collect();
    let (bar_h, gap, label_w, bar_w) = (18.0, 6.0, 190.0, 500.0);
    let height = 40.0 + cells.len() as f64 * (bar_h + gap) + 30.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="11">"#,
        label_w + bar_w + 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="10" y="20" font-size="13">weighted cost shares, correlation={correlation}, k={k}</text>"#
    );
    for (i, c) in cells.iter().enumerate() {
        let y = 34.0 + i as f64 * (bar_h + gap);
        let _ = writeln!(
            svg,
            r#"<text x="10" y="{}">{} @ {}</text>"#,
            y + bar_h * 0.7,
            c.strategy,
            c.selectivity
        );
        let mut x = label_w;
        for (j, f) in breakdown_shares(&c.ledger, weights).into_iter().enumerate() {
            let w = f * bar_w;
            if w > 0.0 {
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x:.2}" y="{y}" width="{w:.2}" height="{bar_h}" fill="{}"><title>{} {:.1}%</title></rect>"#,
                    COLORS[j],
                    SHORT[j],
                    100.0 * f
                );
            }
            x += w;
        }
    }
    let ly = height - 16.0;
    for (j, name) in SHORT.iter().enumerate() {
        let lx = 10.0 + j as f64 * 80.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{ly}">{name}</text>"#,
            ly - 9.0,
            COLORS[j],
            lx + 14.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(strategy: &str, sel: f64, qps: f64) -> MetricsRecord {
        MetricsRecord {
            dataset: "fixture".into(),
            strategy: strategy.into(),
            k: 10,
            selectivity: sel,
            correlation: Correlation::None,
            knobs: "ef=10".into(),
            recall: 0.97,
            mean_latency_us: 100.0,
            p50_us: 90.0,
            p95_us: 150.0,
            qps,
            dist_comps: 100,
            filter_checks: 40,
            hops: 7,
            leaves: 0,
            page_accesses: 120,
            map_lookups: 3,
            materializations: 11,
            reorder_fetches: 0,
            weighted_total: 0,
            truncated_frac: 0.0,
        }
    }

    fn fixture() -> Vec<MetricsRecord> {
        let mut rows = Vec::new();
        for (sel, a, b) in [(0.01, 900.0, 100.0), (0.1, 700.0, 300.0), (0.2, 500.0, 600.0), (0.5, 300.0, 900.0)] {
            rows.push(row("acorn", sel, a));
            rows.push(row("sweeping", sel, b));
        }
        rows
    }

    #[test]
    fn crossover_on_fixture() {
        let s = summarize(&fixture());
        assert_eq!(crossover(&s, Correlation::None, 10), Some(0.2));
        assert_eq!(crossover(&s, Correlation::Negative, 10), None);
    }

    #[test]
    fn single_strategy_has_no_crossover() {
        let rows: Vec<_> = fixture().into_iter().filter(|r| r.strategy == "sweeping").collect();
        assert_eq!(crossover(&summarize(&rows), Correlation::None, 10), None);
    }

    #[test]
    fn shares_sum_to_one() {
        let w = CostWeights::for_dim(32);
        for s in summarize(&fixture()) {
            let total: f64 = breakdown_shares(&s.ledger, &w).iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_roundtrip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_csv(&p, &fixture()).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "dataset,strategy,k,selectivity,correlation,knobs,recall,mean_latency_us,p50_us,p95_us,qps,dist_comps,\
             filter_checks,hops,leaves,page_accesses,map_lookups,materializations,reorder_fetches,weighted_total,truncated_frac"
        );
        assert_eq!(read_csv(&p).unwrap(), fixture());
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "dataset,strategy\nx,y\n").unwrap();
        assert!(read_csv(&p).is_err());
    }

    #[test]
    fn report_and_svg_render() {
        let w = CostWeights::for_dim(16);
        let text = render_report(&fixture(), &w);
        assert!(text.contains("crossover: 0.2"));
        let svg = breakdown_svg(&summarize(&fixture()), &w, Correlation::None, 10);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("@ ").count(), 8);
    }
}
