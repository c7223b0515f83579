use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::plot::line_chart;
use super::ResultRow;
use crate::error::{Error, Result};

/// Column order of the CSV output.
pub const CSV_HEADER: &str = "experiment,method,n,k,T,epsilon,delta,rho,gamma,gamma2,alpha,metric,value,trials,seed";

/// Serialization format of result files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format `{other}`"))),
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}

/// Renders rows as CSV with [`CSV_HEADER`].
pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let fields = [
            r.experiment.clone(),
            r.method.clone(),
            r.n.to_string(),
            opt(r.k),
            opt(r.t),
            opt(r.epsilon.map(num)),
            opt(r.delta.map(num)),
            opt(r.rho.map(num)),
            opt(r.gamma.map(num)),
            opt(r.gamma2.map(num)),
            opt(r.alpha.map(num)),
            r.metric.clone(),
            num(r.value),
            r.trials.to_string(),
            r.seed.to_string(),
        ];
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

/// Renders rows as a JSON array.
pub fn to_json(rows: &[ResultRow]) -> String {
    crate::json::to_pretty(&rows)
}

/// Writes `results.csv` or `results.json` into `dir` and, with `plot`, one
/// SVG chart per metric. Returns the written paths.
pub fn emit(rows: &[ResultRow], dir: &Path, format: OutputFormat, plot: bool) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Config("no result rows to write".into()));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let (file, body) = match format {
        OutputFormat::Csv => ("results.csv", to_csv(rows)),
        OutputFormat::Json => ("results.json", to_json(rows)),
    };
    let path = dir.join(file);
    fs::write(&path, body)?;
    written.push(path);
    if plot {
        for (name, svg) in charts(rows) {
            let path = dir.join(name);
            fs::write(&path, svg)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Swept parameter used as the horizontal axis for an experiment.
fn x_axis(experiment: &str) -> (&'static str, fn(&ResultRow) -> Option<f64>) {
    match experiment {
        "accuracy_vs_collusion" => ("rho", |r| r.rho),
        "dropout_mse" => ("gamma", |r| r.gamma),
        _ => ("T", |r| r.t.map(|t| t as f64)),
    }
}

fn charts(rows: &[ResultRow]) -> Vec<(String, String)> {
    let mut groups: BTreeMap<(String, String), BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    for r in rows {
        let (_, xf) = x_axis(&r.experiment);
        let Some(x) = xf(r) else { continue };
        if !r.value.is_finite() {
            continue;
        }
        let mut label = format!("{} n={}", r.method, r.n);
        if let Some(k) = r.k {
            let _ = write!(label, " k={k}");
        }
        if r.experiment == "dropout_mse" {
            if let Some(t) = r.t {
                let _ = write!(label, " T={t}");
            }
            if let Some(g2) = r.gamma2 {
                let _ = write!(label, " g2/g={:.3}", g2 / r.gamma.unwrap_or(1.0).max(1e-12));
            }
        }
        groups
            .entry((r.experiment.clone(), r.metric.clone()))
            .or_default()
            .entry(label)
            .or_default()
            .push((x, r.value));
    }
    groups
        .into_iter()
        .map(|((exp, metric), series)| {
            let (xname, _) = x_axis(&exp);
            let log_y = metric == "mse" || metric == "sigma_delta_sq";
            let series: Vec<(String, Vec<(f64, f64)>)> = series.into_iter().collect();
            (format!("{exp}_{metric}.svg"), line_chart(&format!("{exp}: {metric}"), xname, &metric, &series, log_y))
        })
        .collect()
}
