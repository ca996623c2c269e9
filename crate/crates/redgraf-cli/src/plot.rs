//! The `plot` subcommand: renders the aggregate CSVs of one step size into
//! three SVG charts (distance and optimality gap on a log axis, diameter on
//! a linear one) with mean lines, deviation bands, and the min_local
//! baselines.

use std::collections::BTreeMap;
use std::path::Path;

use redgraf::engine::AlgorithmKind;
use redgraf::error::{Error, Result};
use redgraf::harness::aggregate_csv_name;
use redgraf::metrics::AGGREGATE_CSV_HEADER;

use crate::svg::{algorithm_color, render, Baseline, Series};

/// `metric -> ordered (k, mean, std)` rows of one aggregate CSV.
type MetricTable = BTreeMap<String, Vec<(f64, f64, f64)>>;

fn parse_aggregate(text: &str) -> Result<MetricTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty aggregate CSV"))?;
    if header.trim() != AGGREGATE_CSV_HEADER {
        return Err(Error::parse(
            1,
            format!("expected header '{AGGREGATE_CSV_HEADER}', found '{header}'"),
        ));
    }
    let mut table: MetricTable = BTreeMap::new();
    for (idx, line) in lines {
        let ln = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(ln, format!("expected 4 columns in '{line}'")));
        }
        let k: f64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(ln, format!("invalid round index '{}'", fields[0])))?;
        let mean: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(ln, format!("invalid mean '{}'", fields[2])))?;
        let std: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(ln, format!("invalid std '{}'", fields[3])))?;
        table
            .entry(fields[1].to_string())
            .or_default()
            .push((k, mean, std));
    }
    Ok(table)
}

fn series_for(
    tables: &[(AlgorithmKind, MetricTable)],
    metric: &str,
) -> Result<Vec<Series>> {
    let mut out = Vec::new();
    for (kind, table) in tables {
        let rows = table.get(metric).filter(|r| !r.is_empty()).ok_or_else(|| {
            Error::parse(
                0,
                format!("aggregate for {kind} carries no '{metric}' rows"),
            )
        })?;
        out.push(Series {
            label: kind.name().to_string(),
            color: algorithm_color(kind.name()).to_string(),
            mean: rows.iter().map(|&(k, m, _)| (k, m)).collect(),
            band: Some(rows.iter().map(|&(k, m, s)| (k, m - s, m + s)).collect()),
        });
    }
    Ok(out)
}

fn baseline_from_summary(dir: &Path, key: &str) -> Option<f64> {
    let text = std::fs::read_to_string(dir.join("summary.json")).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    value.get(key)?.as_f64()
}

/// Renders the three charts for one step size. Returns the written paths.
pub fn plot_dir(dir: &Path, alpha: f64, out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut tables = Vec::new();
    for kind in AlgorithmKind::ALL {
        let path = dir.join(aggregate_csv_name(kind, alpha));
        if path.exists() {
            let table = parse_aggregate(&std::fs::read_to_string(&path)?)?;
            tables.push((kind, table));
        }
    }
    if tables.is_empty() {
        return Err(Error::parse(
            0,
            format!("no aggregate CSVs for alpha = {alpha} in {}", dir.display()),
        ));
    }

    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let charts: [(&str, &str, bool, Option<&str>, &str); 3] = [
        (
            "distance_to_minimizer",
            "dist_to_xstar",
            true,
            Some("min_local_dist"),
            "||mean state - x*||",
        ),
        (
            "optimality_gap",
            "optimality_gap",
            true,
            Some("min_local_gap"),
            "f(mean state) - f*",
        ),
        ("diameter", "diameter", false, None, "regular states' diameter"),
    ];

    for (name, metric, log_y, baseline_key, y_label) in charts {
        let series = series_for(&tables, metric)?;
        let baselines: Vec<Baseline> = baseline_key
            .and_then(|key| baseline_from_summary(dir, key))
            .map(|value| {
                vec![Baseline {
                    label: "min_local".to_string(),
                    value,
                }]
            })
            .unwrap_or_default();
        let svg = render(
            &format!("{name} (alpha = {alpha})"),
            "round k",
            y_label,
            log_y,
            &series,
            &baselines,
        );
        let path = out_dir.join(format!("{name}_a{alpha}.svg"));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_rejects_bad_header() {
        assert!(matches!(
            parse_aggregate("k,metric,avg,std\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn parse_collects_metric_rows() {
        let table = parse_aggregate(
            "k,metric,mean,std\n0,diameter,1.0,0.1\n1,diameter,0.5,0.05\n0,gamma_eff,0.9,0.0\n",
        )
        .unwrap();
        assert_eq!(table["diameter"].len(), 2);
        assert_eq!(table["gamma_eff"].len(), 1);
    }
}
