use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use super::eval::{write_episode_csv, EpisodeLog};
use crate::error::{Error, Result};
use crate::rl::TrainLogRow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series<'a> {
    pub label: &'a str,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line chart of one or more series as a standalone SVG document.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.y.iter().copied()));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for (v, y) in [(y0, HEIGHT - MARGIN), (y1, MARGIN)] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#, MARGIN - 4.0, y + 4.0);
    }
    for (v, x) in [(x0, MARGIN), (x1, WIDTH - MARGIN)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{v:.2}</text>"#, HEIGHT - MARGIN + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ser
            .x
            .iter()
            .zip(&ser.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = MARGIN + 14.0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write(dir: &Path, name: &str, body: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, body)?;
    out.push(p);
    Ok(())
}

/// Velocity, foot-force and reward plots of an episode, optionally with
/// training curves, plus the CSV data behind them. Returns the written paths.
pub fn emit_plots(log: &EpisodeLog, training: Option<&[TrainLogRow]>, dir: &Path) -> Result<Vec<PathBuf>> {
    if log.rows.is_empty() {
        return Err(Error::Data("cannot plot an empty episode".into()));
    }
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let t: Vec<f64> = log.rows.iter().map(|r| r.time).collect();
    let col = |f: &dyn Fn(&super::eval::EpisodeRow) -> f64| log.rows.iter().map(f).collect::<Vec<f64>>();

    let vel = line_chart_svg(
        "Forward velocity",
        "time (s)",
        "m/s",
        &[
            Series { label: "command", x: t.clone(), y: col(&|r| r.cmd_vx) },
            Series { label: "actual", x: t.clone(), y: col(&|r| r.vx) },
        ],
    );
    write(dir, "velocity.svg", &vel, &mut out)?;

    let forces = line_chart_svg(
        "Vertical foot force",
        "time (s)",
        "N",
        &[
            Series { label: "left Fz", x: t.clone(), y: col(&|r| r.foot_force[0][1]) },
            Series { label: "right Fz", x: t.clone(), y: col(&|r| r.foot_force[1][1]) },
        ],
    );
    write(dir, "foot_forces.svg", &forces, &mut out)?;

    let rewards = line_chart_svg(
        "Reward components",
        "time (s)",
        "reward",
        &[
            Series { label: "task", x: t.clone(), y: col(&|r| r.reward.task) },
            Series { label: "style", x: t.clone(), y: col(&|r| r.reward.style) },
            Series { label: "regularization", x: t.clone(), y: col(&|r| r.reward.regularization) },
        ],
    );
    write(dir, "rewards.svg", &rewards, &mut out)?;

    let mut buf = Vec::new();
    write_episode_csv(log, &mut buf)?;
    fs::write(dir.join("episode.csv"), buf)?;
    out.push(dir.join("episode.csv"));

    if let Some(rows) = training.filter(|r| !r.is_empty()) {
        let it: Vec<f64> = rows.iter().map(|r| r.iteration as f64).collect();
        let curves = line_chart_svg(
            "Training rewards",
            "iteration",
            "mean reward per step",
            &[
                Series { label: "task", x: it.clone(), y: rows.iter().map(|r| r.task).collect() },
                Series { label: "style", x: it.clone(), y: rows.iter().map(|r| r.style).collect() },
                Series { label: "regularization", x: it.clone(), y: rows.iter().map(|r| r.regularization).collect() },
            ],
        );
        write(dir, "training_rewards.svg", &curves, &mut out)?;
        let lengths = line_chart_svg(
            "Episode length",
            "iteration",
            "steps",
            &[Series { label: "episode length", x: it, y: rows.iter().map(|r| r.episode_length).collect() }],
        );
        write(dir, "training_length.svg", &lengths, &mut out)?;
    }
    Ok(out)
}

/// Parse a training log written by the teacher trainer.
pub fn read_train_log<R: Read>(r: R) -> Result<Vec<TrainLogRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(crate::rl::csv_err)?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Data(format!("training log row has no column {i}")))?
                .parse::<f64>()
                .map_err(|e| Error::Data(e.to_string()))
        };
        rows.push(TrainLogRow {
            iteration: f(0)? as usize,
            task: f(1)?,
            style: f(2)?,
            regularization: f(3)?,
            episode_length: f(4)?,
            disc_demo: f(5)?,
            disc_agent: f(6)?,
            kl: f(7)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_well_formed() {
        let s = line_chart_svg("a<b", "x", "y", &[Series { label: "s", x: vec![0.0, 1.0], y: vec![2.0, 2.0] }]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b"));
        assert!(s.contains("<polyline"));
    }
}
