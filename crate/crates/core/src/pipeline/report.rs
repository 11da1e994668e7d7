//! CSV reports with `#`-prefixed metadata lines.

use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::moments::TruncationReport;
use crate::nn::{InfidelitySummary, LearningCurve};
use crate::states::WignerGrid;

#[derive(Clone, Debug, Default)]
pub struct Csv {
    meta: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<String>,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        Self { meta: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn row(&mut self, cells: &[String]) -> &mut Self {
        assert_eq!(cells.len(), self.columns.len(), "row width differs from header");
        self.rows.push(cells.join(","));
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k}: {v}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(s, "{r}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn trajectory_csv(traj: &Trajectory) -> Csv {
    let mut csv = Csv::new(&["t", "u1", "u2"]);
    csv.meta("dt", traj.dt).meta("n_points", traj.n_points()).meta("fock_dim", traj.dim);
    for (k, t) in traj.times().into_iter().enumerate() {
        csv.row(&[num(t), num(traj.u1[k]), num(traj.u2[k])]);
    }
    csv
}

pub fn curve_csv(curve: &LearningCurve) -> Csv {
    let mut csv = Csv::new(&["epoch", "train_loss", "val_loss", "val_infidelity"]);
    csv.meta("best_epoch", curve.best_epoch)
        .meta("best_val_loss", curve.best_val_loss)
        .meta("best_infidelity_epoch", curve.best_infidelity_epoch)
        .meta("best_val_infidelity", curve.best_val_infidelity)
        .meta("epochs_run", curve.epochs_run);
    for p in &curve.points {
        csv.row(&[
            p.epoch.to_string(),
            num(p.train_loss),
            num(p.val_loss),
            p.val_infidelity.map(num).unwrap_or_default(),
        ]);
    }
    csv
}

pub fn truncation_csv(report: &TruncationReport) -> Csv {
    let mut csv = Csv::new(&["t", "n_t", "x2_truncated", "x2_quantum", "abs_error", "rel_error"]);
    csv.meta("alpha", report.alpha).meta("fock_dim", report.dim);
    for s in &report.series {
        if let Some((t, m)) = s.instability {
            csv.meta(&format!("unstable_n_t_{}", s.n_t), format!("t={t} magnitude={m:e}"));
        }
    }
    for r in report.rows() {
        csv.row(&[num(r.t), r.n_t.to_string(), num(r.x2_truncated), num(r.x2_quantum), num(r.abs_error), num(r.rel_error)]);
    }
    csv
}

pub fn wigner_csv(grid: &WignerGrid) -> Csv {
    let mut csv = Csv::new(&["x", "p", "W"]);
    csv.meta("integral", grid.integral()).meta("min", grid.min()).meta("max", grid.max());
    for (i, &x) in grid.x_axis.iter().enumerate() {
        for (j, &p) in grid.p_axis.iter().enumerate() {
            csv.row(&[num(x), num(p), num(grid.values[(i, j)])]);
        }
    }
    csv
}

pub fn add_summary(csv: &mut Csv, summary: &InfidelitySummary) {
    csv.meta("count", summary.count)
        .meta("mean_infidelity", summary.mean)
        .meta("median_infidelity", summary.median)
        .meta("p05_infidelity", summary.p05)
        .meta("p95_infidelity", summary.p95)
        .meta("min_infidelity", summary.min)
        .meta("max_infidelity", summary.max);
    let bins: Vec<String> = summary.histogram.iter().map(|b| format!("[{:.1e},{:.1e}):{}", b.lower, b.upper, b.count)).collect();
    csv.meta("histogram", bins.join(" "));
}
