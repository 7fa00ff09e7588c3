//! Aggregated CSV tables and SVG visualization of persisted runs.
//!
//! The CSV mirrors the evaluation-table layout: one row per (task, method,
//! target size) with mean and standard deviation over seeds. The SVG shows,
//! for every stored test sample, the input field, the ground truth, the
//! prediction, and the absolute error recomputed here from the stored
//! tensors; 2-d fields render as heatmaps, 1-d fields as curve overlays.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::diff::Tensor;
use crate::error::FormatError;
use crate::experiment::config::ResultRecord;
use crate::io;
use crate::pde::grid::Domain;

/// One aggregated table row.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub task: String,
    pub method: String,
    pub n_target: usize,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub runs: usize,
}

fn walk_records(dir: &Path, out: &mut Vec<(PathBuf, ResultRecord)>) -> Result<(), FormatError> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk_records(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "record.json") {
            let record: ResultRecord = serde_json::from_str(&fs::read_to_string(&path)?)?;
            record
                .check()
                .map_err(|e| FormatError::Manifest(format!("{}: {}", path.display(), e)))?;
            out.push((path.parent().unwrap().to_path_buf(), record));
        }
    }
    Ok(())
}

/// Find every record under the root, in a deterministic order.
pub fn collect_records(root: &Path) -> Result<Vec<(PathBuf, ResultRecord)>, FormatError> {
    let mut out = Vec::new();
    walk_records(root, &mut out)?;
    if out.is_empty() {
        return Err(FormatError::Manifest(format!(
            "no records under {}",
            root.display()
        )));
    }
    out.sort_by(|(_, a), (_, b)| {
        (&a.task, a.method.id(), a.n_target, a.seed).cmp(&(
            &b.task,
            b.method.id(),
            b.n_target,
            b.seed,
        ))
    });
    Ok(out)
}

/// Group records by (task, method, n_target) and reduce to mean and sample
/// standard deviation (zero for a single run).
pub fn aggregate(records: &[ResultRecord]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.task.clone(), r.method.id().to_string(), r.n_target))
            .or_default()
            .push(r.rmse);
    }
    groups
        .into_iter()
        .map(|((task, method, n_target), vals)| {
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            ReportRow {
                task,
                method,
                n_target,
                mean_rmse: mean,
                std_rmse: std,
                runs: n,
            }
        })
        .collect()
}

pub fn write_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("task,method,n_target,mean_rmse,std_rmse,runs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{}\n",
            r.task, r.method, r.n_target, r.mean_rmse, r.std_rmse, r.runs
        ));
    }
    out
}

/// The full CSV artifact for a runs directory.
pub fn csv_report(root: &Path) -> Result<String, FormatError> {
    let records: Vec<ResultRecord> = collect_records(root)?
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    Ok(write_csv(&aggregate(&records)))
}

/// Absolute error field, recomputed from the two stored tensors rather than
/// trusted from any cached value.
pub fn abs_error(gt: &Tensor, pred: &Tensor) -> Tensor {
    assert_eq!(gt.shape(), pred.shape(), "panel tensors disagree on shape");
    Tensor::from_fn(gt.shape(), |i| (pred.data()[i] - gt.data()[i]).abs())
}

const VIRIDIS: [(f64, f64, f64); 5] = [
    (0.267, 0.005, 0.329),
    (0.231, 0.322, 0.546),
    (0.129, 0.567, 0.551),
    (0.369, 0.789, 0.383),
    (0.993, 0.906, 0.144),
];

/// Map a value in [lo, hi] onto the color scale; a degenerate range paints
/// everything with the lowest anchor, so constant fields come out uniform.
pub fn color_for(v: f64, lo: f64, hi: f64) -> String {
    let t = if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let scaled = t * (VIRIDIS.len() - 1) as f64;
    let i = (scaled.floor() as usize).min(VIRIDIS.len() - 2);
    let f = scaled - i as f64;
    let (r0, g0, b0) = VIRIDIS[i];
    let (r1, g1, b1) = VIRIDIS[i + 1];
    let ch = |a: f64, b: f64| ((a + (b - a) * f) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(r0, r1), ch(g0, g1), ch(b0, b1))
}

const PANEL_W: f64 = 180.0;
const PANEL_H: f64 = 130.0;
const GAP: f64 = 24.0;

fn heatmap_fragment(t: &Tensor, rows: usize, cols: usize, x0: f64, y0: f64) -> String {
    assert_eq!(t.numel(), rows * cols, "field does not fill the raster");
    let lo = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cw = PANEL_W / cols as f64;
    let chh = PANEL_H / rows as f64;
    let mut s = String::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = t.data()[r * cols + c];
            s.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                x0 + c as f64 * cw,
                y0 + r as f64 * chh,
                cw + 0.5,
                chh + 0.5,
                color_for(v, lo, hi)
            ));
        }
    }
    s
}

fn polyline(values: &[f64], lo: f64, hi: f64, x0: f64, y0: f64, color: &str) -> String {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pts: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let x = x0 + PANEL_W * i as f64 / (values.len().max(2) - 1) as f64;
            let y = y0 + PANEL_H * (1.0 - (v - lo) / span);
            format!("{:.2},{:.2}", x, y)
        })
        .collect();
    format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"/>\n",
        pts.join(" "),
        color
    )
}

fn curve_fragment(series: &[(&Tensor, &str)], x0: f64, y0: f64) -> String {
    let lo = series
        .iter()
        .flat_map(|(t, _)| t.data().iter().cloned())
        .fold(f64::INFINITY, f64::min);
    let hi = series
        .iter()
        .flat_map(|(t, _)| t.data().iter().cloned())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut s = format!(
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n",
        x0, y0, PANEL_W, PANEL_H
    );
    for (t, color) in series {
        s.push_str(&polyline(t.data(), lo, hi, x0, y0, color));
    }
    s
}

fn label(text: &str, x: f64, y: f64) -> String {
    format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">{}</text>\n",
        x, y, text
    )
}

fn field_fragment(t: &Tensor, domain: Domain, x0: f64, y0: f64) -> String {
    match domain {
        Domain::Interval { .. } => curve_fragment(&[(t, "#1f77b4")], x0, y0),
        Domain::SpaceTime { nx, nt } => heatmap_fragment(t, nx, nt, x0, y0),
        Domain::Square { n } => heatmap_fragment(t, n, n, x0, y0),
    }
}

/// Panels for one stored test sample. 2-d fields become four heatmaps;
/// 1-d fields become input, truth/prediction overlay, and error curves.
fn sample_fragment(
    input: &Tensor,
    gt: &Tensor,
    pred: &Tensor,
    k_domain: Domain,
    u_domain: Domain,
    y0: f64,
    title: &str,
) -> String {
    let err = abs_error(gt, pred);
    let mut s = label(title, GAP, y0 - 6.0);
    let col = |i: usize| GAP + i as f64 * (PANEL_W + GAP);
    match u_domain {
        Domain::Interval { .. } => {
            s.push_str(&label("input", col(0), y0 + PANEL_H + 14.0));
            s.push_str(&field_fragment(input, k_domain, col(0), y0));
            s.push_str(&label("truth vs prediction", col(1), y0 + PANEL_H + 14.0));
            s.push_str(&curve_fragment(
                &[(gt, "#1f77b4"), (pred, "#d62728")],
                col(1),
                y0,
            ));
            s.push_str(&label("abs error", col(2), y0 + PANEL_H + 14.0));
            s.push_str(&curve_fragment(&[(&err, "#7f7f7f")], col(2), y0));
        }
        _ => {
            for (i, (name, t, d)) in [
                ("input", input, k_domain),
                ("truth", gt, u_domain),
                ("prediction", pred, u_domain),
                ("abs error", &err, u_domain),
            ]
            .iter()
            .enumerate()
            {
                s.push_str(&label(name, col(i), y0 + PANEL_H + 14.0));
                s.push_str(&field_fragment(t, *d, col(i), y0));
            }
        }
    }
    s
}

/// The full SVG artifact: every stored panel of every run under the root.
pub fn svg_report(root: &Path) -> Result<String, FormatError> {
    let records = collect_records(root)?;
    let mut body = String::new();
    let mut y = 30.0;
    let row_h = PANEL_H + 54.0;
    for (dir, record) in &records {
        let model = io::load_model(&dir.join("model.pott"))?;
        let (kd, ud) = (model.k_domain(), model.u_domain());
        for i in 0.. {
            let input_path = dir.join(format!("panel{}_input.pott", i));
            if !input_path.exists() {
                break;
            }
            let input = io::read_tensor(&input_path)?;
            let gt = io::read_tensor(&dir.join(format!("panel{}_gt.pott", i)))?;
            let pred = io::read_tensor(&dir.join(format!("panel{}_pred.pott", i)))?;
            let title = format!(
                "{} | {} | seed {} | sample {} | rMSE {:.4}",
                record.task,
                record.method.id(),
                record.seed,
                i,
                record.rmse
            );
            body.push_str(&sample_fragment(&input, &gt, &pred, kd, ud, y, &title));
            y += row_h;
        }
    }
    let width = GAP + 4.0 * (PANEL_W + GAP);
    Ok(format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {:.0} {:.0}\" width=\"{:.0}\" height=\"{:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
        width, y, width, y, body
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::Method;

    fn record(task: &str, method: Method, n_target: usize, seed: u64, rmse: f64) -> ResultRecord {
        ResultRecord {
            config_hash: "a".repeat(16),
            task: task.into(),
            method,
            n_target,
            seed,
            rmse,
            pretrain_val: vec![],
            transfer_loss: vec![],
            transfer_val: vec![],
            dual_objective: vec![],
            wall_seconds: 1.0,
        }
    }

    #[test]
    fn aggregation_reduces_to_mean_and_sample_std() {
        let records = vec![
            record("burgers d1->d2", Method::Pott, 50, 0, 0.1),
            record("burgers d1->d2", Method::Pott, 50, 1, 0.2),
            record("burgers d1->d2", Method::Pott, 50, 2, 0.3),
            record("burgers d1->d2", Method::Finetune, 50, 0, 0.4),
        ];
        let rows = aggregate(&records);
        assert_eq!(rows.len(), 2);
        // BTreeMap order: finetune before pott
        assert_eq!(rows[0].method, "finetune");
        assert_eq!(rows[0].runs, 1);
        assert_eq!(rows[0].std_rmse, 0.0);
        assert_eq!(rows[1].method, "pott");
        assert!((rows[1].mean_rmse - 0.2).abs() < 1e-15);
        assert!((rows[1].std_rmse - 0.1).abs() < 1e-12, "{}", rows[1].std_rmse);
    }

    #[test]
    fn csv_has_one_row_per_group_plus_header() {
        let records = vec![
            record("advection d1->d2", Method::Pott, 50, 0, 0.15),
            record("advection d1->d2", Method::Pott, 100, 0, 0.12),
        ];
        let csv = write_csv(&aggregate(&records));
        let lines: Vec<&str> = csv.trim().lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "task,method,n_target,mean_rmse,std_rmse,runs");
        assert!(lines[1].starts_with("advection d1->d2,pott,50,0.150000,0.000000,1"));
    }

    #[test]
    fn error_panel_is_recomputed_from_the_stored_pair() {
        let gt = Tensor::new(vec![4], vec![1.0, -2.0, 0.5, 3.0]);
        let pred = Tensor::new(vec![4], vec![1.5, -2.5, 0.5, 2.0]);
        let err = abs_error(&gt, &pred);
        assert_eq!(err.data(), &[0.5, 0.5, 0.0, 1.0]);
    }

    #[test]
    fn constant_fields_paint_uniformly() {
        let t = Tensor::new(vec![4], vec![2.5; 4]);
        let frag = heatmap_fragment(&t, 2, 2, 0.0, 0.0);
        let fills: Vec<&str> = frag
            .split("fill=\"")
            .skip(1)
            .map(|s| s.split('"').next().unwrap())
            .collect();
        assert_eq!(fills.len(), 4);
        assert!(fills.iter().all(|f| *f == fills[0]), "{:?}", fills);
    }

    #[test]
    fn color_scale_hits_its_anchors() {
        assert_eq!(color_for(0.0, 0.0, 1.0), color_for(-3.0, 0.0, 1.0));
        let lo = color_for(0.0, 0.0, 1.0);
        let hi = color_for(1.0, 0.0, 1.0);
        assert_ne!(lo, hi);
        assert_eq!(color_for(5.0, 5.0, 5.0), lo);
    }
}
