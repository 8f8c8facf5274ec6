use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::run::ResultRow;
use crate::equilibrium::Threshold;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    PlotData,
}

impl OutputFormat {
    pub const ALL: [OutputFormat; 3] = [
        OutputFormat::Csv,
        OutputFormat::Json,
        OutputFormat::PlotData,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            OutputFormat::Csv => "results.csv",
            OutputFormat::Json => "results.json",
            OutputFormat::PlotData => "plotdata.json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "plotdata" => Ok(OutputFormat::PlotData),
            other => Err(Error::Parse(format!("unknown output format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub effort_cost: f64,
    pub p_ds: Option<Threshold>,
    pub p_pareto: Option<Threshold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub env_id: String,
    pub mechanism: String,
    pub points: Vec<PlotPoint>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

const COLUMNS: [&str; 14] = [
    "env_id",
    "mechanism",
    "effort_cost",
    "seed",
    "grid",
    "p_ds",
    "p_ds_bisection",
    "p_el",
    "p_ex",
    "p_pareto",
    "theorem3_condition",
    "utility_truthful_p0",
    "utility_g_low_p0",
    "g_low",
];

/// One header line plus one line per row. Probe columns follow the fixed
/// columns, in the order of the longest probe list.
pub fn render_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let probe_ps: Vec<f64> = rows
        .iter()
        .map(|r| r.probes.iter().map(|p| p.p).collect::<Vec<_>>())
        .max_by_key(|v| v.len())
        .unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = COLUMNS.iter().map(|s| s.to_string()).collect();
    for p in &probe_ps {
        header.push(format!("utility_truthful_p{p}"));
        header.push(format!("utility_g_low_p{p}"));
    }
    header.push("error".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.env_id.clone(),
            r.mechanism.clone(),
            r.effort_cost.to_string(),
            r.seed.to_string(),
            r.grid.to_string(),
            opt(&r.p_ds),
            opt(&r.p_ds_bisection),
            opt(&r.p_el),
            opt(&r.p_ex),
            opt(&r.p_pareto),
            opt(&r.theorem3_condition),
            opt(&r.utility_truthful_p0),
            opt(&r.utility_g_low_p0),
            opt(&r.g_low),
        ];
        for p in &probe_ps {
            match r.probes.iter().find(|x| x.p == *p) {
                Some(x) => {
                    rec.push(x.utility_truthful.to_string());
                    rec.push(x.utility_g_low.to_string());
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        rec.push(opt(&r.error));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Per (environment, mechanism) series of thresholds against effort cost.
pub fn plot_series(rows: &[ResultRow]) -> Vec<PlotSeries> {
    let mut out: Vec<PlotSeries> = Vec::new();
    for r in rows {
        let point = PlotPoint {
            effort_cost: r.effort_cost,
            p_ds: r.p_ds,
            p_pareto: r.p_pareto,
        };
        match out
            .iter_mut()
            .find(|s| s.env_id == r.env_id && s.mechanism == r.mechanism)
        {
            Some(s) => s.points.push(point),
            None => out.push(PlotSeries {
                env_id: r.env_id.clone(),
                mechanism: r.mechanism.clone(),
                points: vec![point],
            }),
        }
    }
    for s in &mut out {
        s.points
            .sort_by(|a, b| a.effort_cost.total_cmp(&b.effort_cost));
    }
    out
}

pub fn render(rows: &[ResultRow], format: OutputFormat) -> Result<Vec<u8>> {
    if rows.is_empty() {
        return Err(Error::Validation {
            path: "rows".into(),
            message: "nothing to report".into(),
        });
    }
    let json = |v: serde_json::Result<Vec<u8>>| v.map_err(|e| Error::Io(e.to_string()));
    match format {
        OutputFormat::Csv => render_csv(rows),
        OutputFormat::Json => json(serde_json::to_vec_pretty(rows)),
        OutputFormat::PlotData => json(serde_json::to_vec_pretty(&plot_series(rows))),
    }
}

/// Writes `format` into `dir`, returning the file path.
pub fn emit_report(rows: &[ResultRow], format: OutputFormat, dir: &Path) -> Result<PathBuf> {
    let bytes = render(rows, format)?;
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format.file_name());
    std::fs::write(&path, bytes)?;
    Ok(path)
}

pub fn load_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;
    use crate::harness::run::run_experiment;

    fn rows() -> Vec<ResultRow> {
        let c = parse_config(
            r#"{"environments": [{"id": "E1", "labels": [0, 1], "prior": [0.5, 0.5],
                "high": [[0.9, 0.1], [0.1, 0.9]], "effort_cost": 0.1, "n_agents": 3, "n_objects": 2}],
                "mechanisms": [{"kind": "peer_insensitive", "W": 1}],
                "sweeps": {"effort_costs": [0, 0.05, 0.1]}}"#,
        )
        .unwrap();
        run_experiment(&c).unwrap()
    }

    #[test]
    fn csv_shape() {
        let r = rows();
        let text = String::from_utf8(render(&r, OutputFormat::Csv).unwrap()).unwrap();
        assert_eq!(text.lines().count(), r.len() + 1);
        assert!(text.starts_with("env_id,mechanism,effort_cost"));
    }

    #[test]
    fn plotdata_series() {
        let s = plot_series(&rows());
        assert_eq!(s.len(), 1);
        let ds: Vec<f64> = s[0]
            .points
            .iter()
            .map(|p| p.p_ds.unwrap().value().unwrap())
            .collect();
        for (got, want) in ds.iter().zip([0.0, 0.15625, 0.3125]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip() {
        let r = rows();
        let dir = tempfile::tempdir().unwrap();
        let path = emit_report(&r, OutputFormat::Json, dir.path()).unwrap();
        assert_eq!(load_rows(&path).unwrap(), r);
        assert!(render(&[], OutputFormat::Csv).is_err());
    }
}
