use std::path::PathBuf;

use crate::classical::mean_std;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_string};

use super::run::{cells, load_data, load_trajectory, read_metrics, Cell, MetricRow, RunContext};
use super::svg::{LineChart, Point, Series};

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyPoint {
    pub eps: f64,
    pub layers: usize,
    pub kernel: String,
    pub count: usize,
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
}

fn first_seen<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// Mean and sample standard deviation over seeds for every
/// (noise, kernel, depth) group, depths ascending.
pub fn aggregate_accuracy(rows: &[MetricRow]) -> Vec<AccuracyPoint> {
    let eps_list = first_seen(rows.iter().map(|r| r.eps.to_bits()));
    let kernels = first_seen(rows.iter().map(|r| r.kernel.clone()));
    let mut layers = first_seen(rows.iter().map(|r| r.layers));
    layers.sort_unstable();
    let mut out = Vec::new();
    for &e in &eps_list {
        for k in &kernels {
            for &l in &layers {
                let group: Vec<&MetricRow> = rows
                    .iter()
                    .filter(|r| r.eps.to_bits() == e && &r.kernel == k && r.layers == l)
                    .collect();
                if group.is_empty() {
                    continue;
                }
                let train: Vec<f64> = group.iter().map(|r| r.train_acc).collect();
                let test: Vec<f64> = group.iter().map(|r| r.test_acc).collect();
                let (train_mean, train_std) = mean_std(&train);
                let (test_mean, test_std) = mean_std(&test);
                out.push(AccuracyPoint {
                    eps: f64::from_bits(e),
                    layers: l,
                    kernel: k.clone(),
                    count: group.len(),
                    train_mean,
                    train_std,
                    test_mean,
                    test_std,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct ReportSummary {
    pub files: Vec<PathBuf>,
    /// Expected `(cell, kernel)` results absent from the metrics.
    pub missing: Vec<String>,
}

struct Curves {
    layers: usize,
    loss: Vec<(f64, f64)>,
    deviation: Vec<(f64, f64)>,
}

fn deviation_curve(thetas: &[Vec<f64>]) -> Vec<f64> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n0 = norm(&thetas[0]);
    thetas
        .iter()
        .map(|t| {
            let diff: Vec<f64> = t.iter().zip(&thetas[0]).map(|(a, b)| a - b).collect();
            if n0 > 0.0 {
                norm(&diff) / n0
            } else {
                f64::NAN
            }
        })
        .collect()
}

fn per_epoch_stats(runs: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|t| mean_std(&runs.iter().map(|r| r[t]).collect::<Vec<_>>()))
        .collect()
}

fn curves_for(ctx: &RunContext, eps: f64, missing: &mut Vec<String>) -> Vec<Curves> {
    let mut out = Vec::new();
    for &layers in &ctx.config.model.layers {
        let mut losses = Vec::new();
        let mut devs = Vec::new();
        for &seed in &ctx.config.seeds {
            let cell = Cell { eps, layers, seed };
            let loaded = load_data(ctx, &cell).and_then(|(_, _, h)| load_trajectory(ctx, &cell, &h));
            match loaded {
                Ok((traj, _)) => {
                    devs.push(deviation_curve(&traj.thetas));
                    losses.push(traj.losses);
                }
                Err(e) => missing.push(format!("{} trajectory: {e}", cell.tag())),
            }
        }
        if !losses.is_empty() {
            out.push(Curves {
                layers,
                loss: per_epoch_stats(&losses),
                deviation: per_epoch_stats(&devs),
            });
        }
    }
    out
}

fn curve_chart(title: String, y_label: &str, curves: &[Curves], pick: fn(&Curves) -> &[(f64, f64)]) -> LineChart {
    LineChart {
        title,
        x_label: "epoch".into(),
        y_label: y_label.into(),
        series: curves
            .iter()
            .map(|c| Series {
                name: format!("L = {}", c.layers),
                points: pick(c)
                    .iter()
                    .enumerate()
                    .map(|(t, &(m, _))| m.is_finite().then_some(Point { x: t as f64, y: m, err: 0.0 }))
                    .collect(),
            })
            .collect(),
    }
}

/// Accuracy-versus-depth tables and charts per noise level, loss and
/// deviation curves per depth, and a text summary that lists gaps.
pub fn report(ctx: &RunContext) -> Result<ReportSummary> {
    let rows = read_metrics(&ctx.metrics_path())?;
    if rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    let dir = ctx.dir("report");
    let mut summary = ReportSummary::default();
    let mut kernels: Vec<String> = ctx.config.kernel.kernel_names().iter().map(|s| s.to_string()).collect();
    kernels.push("oracle".into());
    for cell in cells(&ctx.config) {
        for k in &kernels {
            let present = rows.iter().any(|r| {
                r.eps.to_bits() == cell.eps.to_bits() && r.layers == cell.layers && r.seed == cell.seed && &r.kernel == k
            });
            if !present {
                summary.missing.push(format!("{} {k}", cell.tag()));
            }
        }
    }

    let points = aggregate_accuracy(&rows);
    let mut layers = ctx.config.model.layers.clone();
    layers.sort_unstable();
    let mut text = format!("config {}\n{} metric rows\n\n", ctx.hash, rows.len());
    for &eps in &ctx.config.dataset.noise {
        let tag = format!("{eps}");
        let here: Vec<&AccuracyPoint> = points.iter().filter(|p| p.eps.to_bits() == eps.to_bits()).collect();
        let mut csv = String::from("L,kernel,n,train_mean,train_std,test_mean,test_std\n");
        for p in &here {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.layers,
                p.kernel,
                p.count,
                fmt_f64(p.train_mean),
                fmt_f64(p.train_std),
                fmt_f64(p.test_mean),
                fmt_f64(p.test_std)
            ));
        }
        let csv_path = dir.join(format!("accuracy_eps_{tag}.csv"));
        write_string(&csv_path, &csv)?;
        summary.files.push(csv_path);

        let chart = LineChart {
            title: format!("test accuracy, noise {tag}"),
            x_label: "layers L".into(),
            y_label: "test accuracy".into(),
            series: kernels
                .iter()
                .map(|k| Series {
                    name: k.clone(),
                    points: layers
                        .iter()
                        .map(|&l| {
                            here.iter().find(|p| &p.kernel == k && p.layers == l).map(|p| Point {
                                x: l as f64,
                                y: p.test_mean,
                                err: p.test_std,
                            })
                        })
                        .collect(),
                })
                .collect(),
        };
        let svg_path = dir.join(format!("accuracy_eps_{tag}.svg"));
        write_string(&svg_path, &chart.render())?;
        summary.files.push(svg_path);

        let curves = curves_for(ctx, eps, &mut summary.missing);
        let mut csv = String::from("L,epoch,loss_mean,loss_std,deviation_mean,deviation_std\n");
        for c in &curves {
            for (t, (l, d)) in c.loss.iter().zip(&c.deviation).enumerate() {
                csv.push_str(&format!(
                    "{},{t},{},{},{},{}\n",
                    c.layers,
                    fmt_f64(l.0),
                    fmt_f64(l.1),
                    fmt_f64(d.0),
                    fmt_f64(d.1)
                ));
            }
        }
        let curves_path = dir.join(format!("curves_eps_{tag}.csv"));
        write_string(&curves_path, &csv)?;
        summary.files.push(curves_path);
        for (name, y, pick) in [
            ("loss", "training loss", (|c: &Curves| c.loss.as_slice()) as fn(&Curves) -> &[(f64, f64)]),
            ("deviation", "parameter deviation", |c: &Curves| c.deviation.as_slice()),
        ] {
            let path = dir.join(format!("{name}_eps_{tag}.svg"));
            write_string(&path, &curve_chart(format!("{y}, noise {tag}"), y, &curves, pick).render())?;
            summary.files.push(path);
        }

        text.push_str(&format!("noise {tag}: mean test accuracy (sample std) by L\n"));
        text.push_str(&format!("{:<10}", "kernel"));
        for l in &layers {
            text.push_str(&format!("{:>18}", format!("L={l}")));
        }
        text.push('\n');
        for k in &kernels {
            text.push_str(&format!("{k:<10}"));
            for &l in &layers {
                let cell = match here.iter().find(|p| &p.kernel == k && p.layers == l) {
                    Some(p) => format!("{:.3} ({:.3})", p.test_mean, p.test_std),
                    None => "-".into(),
                };
                text.push_str(&format!("{cell:>18}"));
            }
            text.push('\n');
        }
        text.push('\n');
    }
    if summary.missing.is_empty() {
        text.push_str("all cells present\n");
    } else {
        text.push_str(&format!("{} gaps:\n", summary.missing.len()));
        for m in &summary.missing {
            text.push_str(&format!("  {m}\n"));
        }
    }
    let path = dir.join("summary.txt");
    write_string(&path, &text)?;
    summary.files.push(path);
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(layers: usize, seed: u64, kernel: &str, test: f64) -> MetricRow {
        MetricRow {
            eps: 0.1,
            layers,
            seed,
            kernel: kernel.into(),
            train_acc: 1.0,
            test_acc: test,
            final_loss: Some(0.5),
            param_deviation: Some(0.2),
        }
    }

    #[test]
    fn error_bars_are_sample_std() {
        let rows = vec![row(2, 1, "qpk", 0.5), row(2, 2, "qpk", 0.75), row(2, 3, "qpk", 1.0), row(1, 1, "qpk", 0.6)];
        let pts = aggregate_accuracy(&rows);
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].layers, 1);
        assert_eq!((pts[0].count, pts[0].test_std), (1, 0.0));
        assert_eq!(pts[1].count, 3);
        assert!((pts[1].test_mean - 0.75).abs() < 1e-15);
        assert!((pts[1].test_std - 0.25).abs() < 1e-15);
        assert_eq!(pts[1].train_std, 0.0);
    }

    #[test]
    fn deviation_curve_starts_at_zero() {
        let d = deviation_curve(&[vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(d, vec![0.0, 1.0]);
    }
}
