use fenc_core::nvmodel::{self, OdmrParams};
use serde::{Deserialize, Serialize};

use super::{Check, Outputs};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::formats::Table;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub label: String,
    pub eta: f64,
    pub tabulated_eta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<Row>,
    pub tolerance: f64,
}

pub fn run(config: &ExperimentConfig) -> Result<Outputs> {
    let c = config.sensitivity_table.clone().unwrap_or_default();
    let mut table = Table::new(&[
        "label",
        "linewidth_hz",
        "contrast",
        "count_rate",
        "eta_ut_per_rthz",
        "tabulated_ut_per_rthz",
        "linearity_bound_ut",
    ]);
    let mut rows = Vec::new();
    for s in &c.samples {
        let p = OdmrParams::new(2.87e9, s.linewidth, s.contrast, s.count_rate)?;
        let eta = nvmodel::sensitivity(&p);
        table.push(vec![
            s.label.clone(),
            s.linewidth.to_string(),
            s.contrast.to_string(),
            s.count_rate.to_string(),
            (eta * 1e6).to_string(),
            s.tabulated_eta.map(|t| (t * 1e6).to_string()).unwrap_or_default(),
            (nvmodel::linearity_bound(&p) * 1e6).to_string(),
        ]);
        rows.push(Row {
            label: s.label.clone(),
            eta,
            tabulated_eta: s.tabulated_eta,
        });
    }
    let mut out = Outputs::default();
    out.csv("sensitivity.csv", &table);
    out.set_summary(&Summary {
        rows,
        tolerance: c.tolerance,
    });
    Ok(out)
}

pub fn evaluate(s: &Summary) -> Vec<Check> {
    s.rows
        .iter()
        .filter_map(|r| {
            r.tabulated_eta
                .map(|t| Check::relative(format!("eta {}", r.label), r.eta, t, s.tolerance))
        })
        .collect()
}
