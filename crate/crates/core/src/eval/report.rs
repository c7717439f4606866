//! CSV and SVG export of evaluation results.

use std::fmt::Write as _;
use std::path::Path;

use super::metrics::EvalReport;
use crate::error::{Error, Result};

/// Rows of `metric,value`. Values use shortest round-trip formatting.
pub fn metrics_rows(report: &EvalReport, suffix: &str) -> Vec<(String, f64)> {
    let mut rows = vec![
        (format!("map{suffix}"), report.map),
        (format!("rank1{suffix}"), report.rank(1)),
        (format!("rank5{suffix}"), report.rank(5)),
        (format!("rank10{suffix}"), report.rank(10)),
    ];
    if suffix.is_empty() {
        rows.push(("num_queries".into(), report.num_queries as f64));
        rows.push(("num_evaluated".into(), report.num_evaluated as f64));
        rows.push(("num_excluded".into(), report.num_excluded as f64));
        rows.push(("max_rank".into(), report.max_rank as f64));
    }
    rows
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[(String, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "value"])?;
    for (name, value) in rows {
        w.write_record([name.as_str(), &value.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let value = rec.get(1).unwrap_or("").parse().map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("bad metric value: {e}"),
            })?;
            Ok((rec.get(0).unwrap_or("").to_string(), value))
        })
        .collect()
}

/// Writes `k,accuracy[,accuracy_rerank]`.
pub fn write_cmc_csv(path: impl AsRef<Path>, base: &[f64], reranked: Option<&[f64]>) -> Result<()> {
    let path = path.as_ref();
    if let Some(r) = reranked {
        if r.len() != base.len() {
            return Err(Error::invalid("CMC curves differ in length"));
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["k", "accuracy"];
    if reranked.is_some() {
        header.push("accuracy_rerank");
    }
    w.write_record(&header)?;
    for (i, v) in base.iter().enumerate() {
        let mut row = vec![(i + 1).to_string(), v.to_string()];
        if let Some(r) = reranked {
            row.push(r[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads the curves back; the second is present when the file has a rerank column.
pub fn read_cmc_csv(path: impl AsRef<Path>) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let path = path.as_ref();
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_path(path)?;
    let has_rerank = r.headers()?.len() == 3;
    let mut base = Vec::new();
    let mut rr = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let k: usize = rec.get(0).unwrap_or("").parse().map_err(|e| bad(format!("bad k: {e}")))?;
        if k != i + 1 {
            return Err(bad(format!("expected k={} got {k}", i + 1)));
        }
        base.push(rec.get(1).unwrap_or("").parse().map_err(|e| bad(format!("bad accuracy: {e}")))?);
        if has_rerank {
            rr.push(rec.get(2).unwrap_or("").parse().map_err(|e| bad(format!("bad accuracy: {e}")))?);
        }
    }
    Ok((base, has_rerank.then_some(rr)))
}

/// Static SVG line chart of one or more CMC curves.
pub fn cmc_svg(curves: &[(&str, &[f64])]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 48.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let max_k = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(1).max(2);
    let x = |k: usize| PAD + (k - 1) as f64 / (max_k - 1) as f64 * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - v * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {} L{PAD} {} L{} {}" stroke="black" fill="none"/>"#,
        PAD,
        H - PAD,
        W - PAD,
        H - PAD
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{tick}</text>"#, PAD - 6.0, y(tick) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">rank</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">1</text>"#, x(1) + 4.0, H - PAD + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{max_k}</text>"#, x(max_k) + 4.0, H - PAD + 16.0);
    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = curve
            .iter()
            .enumerate()
            .map(|(k, &v)| format!("{:.2},{:.2}", x(k + 1), y(v)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="2"/>"#, points.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{label}</text>"#,
            W - PAD - 120.0,
            PAD + 16.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> EvalReport {
        EvalReport {
            map: 0.1 + 0.2,
            cmc: vec![1.0 / 3.0, 0.5, 0.9, 1.0],
            num_queries: 4,
            num_evaluated: 3,
            num_excluded: 1,
            max_rank: 4,
            reranked: false,
        }
    }

    #[test]
    fn metrics_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("metrics.csv");
        let mut rows = metrics_rows(&report(), "");
        rows.extend(metrics_rows(&report(), "_rerank"));
        write_metrics_csv(&path, &rows).unwrap();
        assert_eq!(read_metrics_csv(&path).unwrap(), rows);
    }

    #[test]
    fn cmc_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("cmc.csv");
        let r = report();
        write_cmc_csv(&path, &r.cmc, None).unwrap();
        assert_eq!(read_cmc_csv(&path).unwrap(), (r.cmc.clone(), None));
        let other = vec![0.5, 0.75, 1.0, 1.0];
        write_cmc_csv(&path, &r.cmc, Some(&other)).unwrap();
        assert_eq!(read_cmc_csv(&path).unwrap(), (r.cmc.clone(), Some(other)));
        assert!(write_cmc_csv(&path, &r.cmc, Some(&[1.0])).is_err());
    }

    #[test]
    fn svg_has_one_polyline_per_curve() {
        let a = [0.5, 1.0];
        let b = [0.7, 1.0];
        let svg = cmc_svg(&[("l2", &a), ("rerank", &b)]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
