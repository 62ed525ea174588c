//! Minimal deterministic SVG 1.1 writers.

use std::fmt::Write;

use super::{CurveRow, DeltaRow, DifficultyImageRow, RegressionRow, ReportError};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn c(x: f64) -> String {
    format!("{x:.2}")
}

fn stat(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "∞".into() } else { "-∞".into() }
    } else {
        format!("{x:.2}")
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = if self.x1 > self.x0 { self.x1 - self.x0 } else { 1.0 };
        LEFT + (x - self.x0) / span * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let span = if self.y1 > self.y0 { self.y1 - self.y0 } else { 1.0 };
        HEIGHT - BOTTOM - (y - self.y0) / span * (HEIGHT - TOP - BOTTOM)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="Helvetica, Arial, sans-serif" font-size="12">
<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>
<text x="{tx}" y="28" font-size="15" text-anchor="middle">{t}</text>"#,
        w = WIDTH,
        h = HEIGHT,
        tx = c(WIDTH / 2.0),
        t = esc(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#,
        l = c(l),
        t = c(t),
        b = c(b),
        r = c(r)
    );
    let _ = writeln!(
        out,
        r#"<text x="{x}" y="{y}" text-anchor="middle">{s}</text>"#,
        x = c((l + r) / 2.0),
        y = c(HEIGHT - 18.0),
        s = esc(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">{s}</text>"#,
        y = c((t + b) / 2.0),
        s = esc(y_label)
    );
    let _ = f;
}

fn y_ticks(out: &mut String, f: &Frame, ticks: &[f64], fmt: impl Fn(f64) -> String) {
    for &v in ticks {
        let y = f.py(v);
        let _ = writeln!(
            out,
            r##"<line x1="{l}" y1="{y}" x2="{r}" y2="{y}" stroke="#dddddd"/><text x="{tx}" y="{ty}" text-anchor="end">{s}</text>"##,
            l = c(LEFT),
            r = c(WIDTH - RIGHT),
            y = c(y),
            tx = c(LEFT - 6.0),
            ty = c(y + 4.0),
            s = esc(&fmt(v))
        );
    }
}

fn x_ticks(out: &mut String, f: &Frame, ticks: &[f64], fmt: impl Fn(f64) -> String) {
    for &v in ticks {
        let x = f.px(v);
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{b}" x2="{x}" y2="{b2}" stroke="black"/><text x="{x}" y="{ty}" text-anchor="middle">{s}</text>"#,
            x = c(x),
            b = c(HEIGHT - BOTTOM),
            b2 = c(HEIGHT - BOTTOM + 5.0),
            ty = c(HEIGHT - BOTTOM + 18.0),
            s = esc(&fmt(v))
        );
    }
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    for (i, (label, colour)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{ry}" width="12" height="12" fill="{colour}"/><text x="{tx}" y="{ty}">{s}</text>"#,
            x = c(x),
            ry = c(y - 10.0),
            tx = c(x + 18.0),
            ty = c(y),
            s = esc(label)
        );
    }
}

/// Mean `p_wrong` against N, one series per sweep, with standard-error bands.
/// The y axis is fixed to [0, 1].
pub fn render_curves(title: &str, rows: &[CurveRow]) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Render("no curve rows".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.sweep.as_str()) {
            order.push(&r.sweep);
        }
    }
    let x0 = rows.iter().map(|r| r.n).min().unwrap_or(0) as f64;
    let x1 = rows.iter().map(|r| r.n).max().unwrap_or(1) as f64;
    let f = Frame { x0, x1, y0: 0.0, y1: 1.0 };
    let mut out = String::new();
    open(&mut out, title);
    y_ticks(&mut out, &f, &[0.0, 0.25, 0.5, 0.75, 1.0], |v| format!("{v:.2}"));
    let mut ns: Vec<u32> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let stride = ns.len().div_ceil(12).max(1);
    let ticks: Vec<f64> = ns.iter().step_by(stride).map(|&n| f64::from(n)).collect();
    x_ticks(&mut out, &f, &ticks, |v| format!("{v}"));
    axes(&mut out, &f, "number of confederates N", "p(wrong)");
    let mut entries = Vec::new();
    for (i, sweep) in order.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<&CurveRow> = rows.iter().filter(|r| r.sweep == *sweep).collect();
        pts.sort_by_key(|r| r.n);
        let upper: Vec<String> = pts
            .iter()
            .map(|r| format!("{},{}", c(f.px(f64::from(r.n))), c(f.py((r.mean_p_wrong + r.stderr.unwrap_or(0.0)).min(1.0)))))
            .collect();
        let lower: Vec<String> = pts
            .iter()
            .rev()
            .map(|r| format!("{},{}", c(f.px(f64::from(r.n))), c(f.py((r.mean_p_wrong - r.stderr.unwrap_or(0.0)).max(0.0)))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polygon points="{} {}" fill="{colour}" fill-opacity="0.15" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = pts
            .iter()
            .map(|r| format!("{},{}", c(f.px(f64::from(r.n))), c(f.py(r.mean_p_wrong))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for r in &pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{}" cy="{}" r="3" fill="{colour}"/>"#,
                c(f.px(f64::from(r.n))),
                c(f.py(r.mean_p_wrong))
            );
        }
        let label = &pts[0].label;
        entries.push((format!("{label} (AUC {:.3})", pts[0].auc), colour));
    }
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Ok(out)
}

/// One bar per delta, pointing up for positive values, annotated with t.
pub fn render_deltas(title: &str, rows: &[DeltaRow]) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Render("no delta rows".into()));
    }
    let m = rows.iter().map(|r| r.delta.abs()).fold(0.0, f64::max);
    let m = if m > 0.0 { m * 1.25 } else { 0.1 };
    let f = Frame { x0: 0.0, x1: rows.len() as f64, y0: -m, y1: m };
    let mut out = String::new();
    open(&mut out, title);
    y_ticks(&mut out, &f, &[-m, -m / 2.0, 0.0, m / 2.0, m], |v| format!("{v:.3}"));
    axes(&mut out, &f, "condition", "AUC difference");
    let zero = f.py(0.0);
    let _ = writeln!(
        out,
        r#"<line x1="{l}" y1="{y}" x2="{r}" y2="{y}" stroke="black"/>"#,
        l = c(LEFT),
        r = c(WIDTH - RIGHT),
        y = c(zero)
    );
    let slot = f.px(1.0) - f.px(0.0);
    for (i, r) in rows.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let x = f.px(i as f64) + slot * 0.2;
        let top = f.py(r.delta.max(0.0));
        let height = (f.py(r.delta.min(0.0)) - top).abs();
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{colour}"/>"#,
            c(x),
            c(top),
            c(slot * 0.6),
            c(height)
        );
        let ty = if r.delta >= 0.0 { top - 6.0 } else { top + height + 14.0 };
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">t = {}</text>"#,
            c(x + slot * 0.3),
            c(ty),
            esc(&stat(r.t_statistic))
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            c(x + slot * 0.3),
            c(HEIGHT - BOTTOM + 18.0),
            esc(&r.name)
        );
    }
    let entries: Vec<(String, &str)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (format!("{}: {:.4}", r.name, r.delta), PALETTE[i % PALETTE.len()]))
        .collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Ok(out)
}

fn ramp(t: f64) -> String {
    // Blue to yellow.
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(68.0, 253.0), lerp(1.0, 231.0), lerp(84.0, 37.0))
}

/// Passing images: logit on x, difficulty on y, colour by normalized AUC.
pub fn render_scatter(title: &str, rows: &[DifficultyImageRow]) -> Result<String, ReportError> {
    let pts: Vec<&DifficultyImageRow> = rows.iter().filter(|r| r.passed).collect();
    if pts.is_empty() {
        return Err(ReportError::Render("no passing images".into()));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in &pts {
        x0 = x0.min(r.logit_correct);
        x1 = x1.max(r.logit_correct);
        y0 = y0.min(r.difficulty);
        y1 = y1.max(r.difficulty);
    }
    let f = Frame { x0, x1, y0, y1 };
    let mut out = String::new();
    open(&mut out, title);
    let yt: Vec<f64> = (0..=4).map(|i| y0 + (y1 - y0) * f64::from(i) / 4.0).collect();
    y_ticks(&mut out, &f, &yt, |v| format!("{v:.1}"));
    let xt: Vec<f64> = (0..=4).map(|i| x0 + (x1 - x0) * f64::from(i) / 4.0).collect();
    x_ticks(&mut out, &f, &xt, |v| format!("{v:.1}"));
    axes(&mut out, &f, "logit(correct) at N = 0", "task difficulty");
    for r in &pts {
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{}" r="3.5" fill="{}" fill-opacity="0.85"/>"#,
            c(f.px(r.logit_correct)),
            c(f.py(r.difficulty)),
            ramp(r.auc_normalized.unwrap_or(0.0))
        );
    }
    let flagged = rows.len() - pts.len();
    legend(
        &mut out,
        &[
            ("normalized AUC 0".to_string(), "#440154"),
            ("normalized AUC 1".to_string(), "#fde725"),
        ],
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}">{} images, {} flagged</text>"#,
        c(WIDTH - RIGHT + 16.0),
        c(TOP + 60.0),
        pts.len(),
        flagged
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Regression rows as a table: Task, Variable, β, SE, t, p.
pub fn render_regression_table(title: &str, rows: &[RegressionRow]) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Render("no regression rows".into()));
    }
    let mut out = String::new();
    open(&mut out, title);
    let cols = [40.0, 200.0, 400.0, 480.0, 560.0, 640.0];
    let header = ["Task", "Variable", "β", "SE", "t", "p"];
    for (x, h) in cols.iter().zip(header) {
        let _ = writeln!(out, r#"<text x="{}" y="70" font-weight="bold">{}</text>"#, c(*x), esc(h));
    }
    for (i, r) in rows.iter().enumerate() {
        let y = 95.0 + 22.0 * i as f64;
        let cells = [
            r.task.clone(),
            r.variable.clone(),
            format!("{:.3}", r.beta),
            format!("{:.3}", r.se),
            stat(r.t),
            format!("{:.3e}", r.p),
        ];
        for (x, v) in cols.iter().zip(cells) {
            let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, c(*x), c(y), esc(&v));
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
