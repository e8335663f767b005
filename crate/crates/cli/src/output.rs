use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fracflow::diagnostics::mass;
use fracflow::{FractionalKernel, Result, Trajectory};
use serde::Serialize;

use crate::CliError;

/// 17 significant digits, enough to round-trip any double.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_file(path: &Path, contents: &str) -> std::result::Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::result::Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

/// Square matrix as CSV with vertex labels on both axes.
pub fn matrix_csv(labels: &[String], m: impl Fn(usize, usize) -> f64) -> String {
    let mut out = String::from("vertex");
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (x, l) in labels.iter().enumerate() {
        out.push_str(l);
        for y in 0..labels.len() {
            out.push(',');
            out.push_str(&num(m(x, y)));
        }
        out.push('\n');
    }
    out
}

/// Per-time summary columns derived from a trajectory.
pub struct Series {
    pub t: Vec<f64>,
    pub min_u: Vec<f64>,
    pub max_u: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
}

pub fn series(traj: &Trajectory, kernel: &FractionalKernel) -> Result<Series> {
    let (p, q) = (traj.config.p, traj.config.q);
    let mut s = Series {
        t: Vec::new(),
        min_u: Vec::new(),
        max_u: Vec::new(),
        mass: Vec::new(),
        energy: Vec::new(),
    };
    for st in &traj.states {
        s.t.push(st.t);
        s.min_u.push(st.u.min());
        s.max_u.push(st.u.max());
        s.mass.push(mass(kernel.graph(), &st.u, q)?);
        s.energy.push(kernel.dirichlet_p_energy(&st.u, p)?);
    }
    Ok(s)
}

pub fn trajectory_csv(traj: &Trajectory, series: &Series) -> String {
    let n = traj.initial().len();
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",u_{i}");
    }
    out.push_str(",min_u,max_u,mass,dirichlet_p_energy\n");
    for (k, st) in traj.states.iter().enumerate() {
        out.push_str(&num(st.t));
        for v in st.u.iter() {
            out.push(',');
            out.push_str(&num(*v));
        }
        for col in [&series.min_u, &series.max_u, &series.mass, &series.energy] {
            out.push(',');
            out.push_str(&num(col[k]));
        }
        out.push('\n');
    }
    out
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Line plot of one or more series against `t`.
pub fn svg_plot(title: &str, t: &[f64], lines: &[(&str, &[f64])]) -> String {
    let (t0, t1) = (t[0], t[t.len() - 1]);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, ys) in lines {
        for y in ys.iter().filter(|y| y.is_finite()) {
            lo = lo.min(*y);
            hi = hi.max(*y);
        }
    }
    if !(hi > lo) {
        let pad = if lo.is_finite() && lo != 0.0 { lo.abs() * 0.05 } else { 1.0 };
        lo -= pad;
        hi += pad;
        if !lo.is_finite() {
            lo = -1.0;
            hi = 1.0;
        }
    }
    let span_t = if t1 > t0 { t1 - t0 } else { 1.0 };
    let px = |v: f64| MARGIN + (v - t0) / span_t * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" stroke="black" fill="none"/>"#
    );
    for (frac, anchor) in [(0.0, "start"), (1.0, "end")] {
        let tv = t0 + frac * span_t;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{}</text>"#,
            px(tv),
            y0 + 16.0,
            short(tv)
        );
    }
    for v in [lo, hi] {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            py(v) + 4.0,
            short(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">t</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 16.0
    );
    for (i, (name, ys)) in lines.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let points: Vec<String> = t
            .iter()
            .zip(ys.iter())
            .filter(|(_, y)| y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" stroke="{colour}" stroke-width="1.5" fill="none"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" fill="{colour}" text-anchor="end">{}</text>"#,
            x1,
            y1 + 14.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn short(v: f64) -> String {
    format!("{v:.4e}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_plots(dir: &Path, series: &Series) -> std::result::Result<(), CliError> {
    write_file(
        &dir.join("bounds.svg"),
        &svg_plot("min and max of u", &series.t, &[("min u", &series.min_u), ("max u", &series.max_u)]),
    )?;
    write_file(&dir.join("mass.svg"), &svg_plot("mass", &series.t, &[("mass", &series.mass)]))?;
    write_file(
        &dir.join("energy.svg"),
        &svg_plot("Dirichlet p-energy", &series.t, &[("energy", &series.energy)]),
    )
}
