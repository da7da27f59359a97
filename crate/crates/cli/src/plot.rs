//! SVG line charts of trajectory and Pareto tables. Output is a pure
//! function of the input tables.

use std::fmt::Write as _;

use lunar_descent::pareto::ParetoResult;
use lunar_descent::{Error, Result};

use crate::io::TrajectoryTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Altitude,
    VerticalVelocity,
    Downrange,
    HorizontalVelocity,
    Crossrange,
    Pitch,
    Pareto,
}

impl PlotKind {
    pub const TRAJECTORY: [PlotKind; 6] = [
        PlotKind::Altitude,
        PlotKind::VerticalVelocity,
        PlotKind::Downrange,
        PlotKind::HorizontalVelocity,
        PlotKind::Crossrange,
        PlotKind::Pitch,
    ];

    pub fn file_name(&self) -> &'static str {
        match self {
            PlotKind::Altitude => "altitude.svg",
            PlotKind::VerticalVelocity => "vertical_velocity.svg",
            PlotKind::Downrange => "downrange.svg",
            PlotKind::HorizontalVelocity => "horizontal_velocity.svg",
            PlotKind::Crossrange => "crossrange.svg",
            PlotKind::Pitch => "pitch.svg",
            PlotKind::Pareto => "pareto.svg",
        }
    }

    fn labels(&self) -> (&'static str, &'static str, &'static str) {
        match self {
            PlotKind::Altitude => ("Altitude profile", "time (s)", "altitude (km)"),
            PlotKind::VerticalVelocity => ("Vertical velocity profile", "time (s)", "vertical velocity (m/s)"),
            PlotKind::Downrange => ("Downrange profile", "time (s)", "downrange (km)"),
            PlotKind::HorizontalVelocity => ("Horizontal velocity profile", "time (s)", "horizontal velocity (m/s)"),
            PlotKind::Crossrange => ("Crossrange profile", "time (s)", "crossrange (km)"),
            PlotKind::Pitch => ("Pitch profile", "time (s)", "pitch (deg)"),
            PlotKind::Pareto => ("Pareto optimal curve", "max thrust / initial mass (m/s²)", "effective payload (kg)"),
        }
    }
}

/// Surface distances from the first row, m: along the great circle leaving
/// the initial point in the direction of the initial horizontal velocity,
/// and to its left.
pub fn ground_track(table: &TrajectoryTable) -> (Vec<f64>, Vec<f64>) {
    let unit = |theta: f64, phi: f64| [phi.cos() * theta.cos(), phi.cos() * theta.sin(), phi.sin()];
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let s0 = &table.states[0];
    let p0 = unit(s0.theta, s0.phi);
    let east = [-s0.theta.sin(), s0.theta.cos(), 0.0];
    let north = [-s0.phi.sin() * s0.theta.cos(), -s0.phi.sin() * s0.theta.sin(), s0.phi.cos()];
    let heading = if s0.u == 0.0 && s0.v == 0.0 { 0.0 } else { s0.v.atan2(s0.u) };
    let (c, s) = (heading.cos(), heading.sin());
    let e0 = [c * east[0] + s * north[0], c * east[1] + s * north[1], c * east[2] + s * north[2]];
    let pole = [
        p0[1] * e0[2] - p0[2] * e0[1],
        p0[2] * e0[0] - p0[0] * e0[2],
        p0[0] * e0[1] - p0[1] * e0[0],
    ];
    table
        .states
        .iter()
        .map(|st| {
            let p = unit(st.theta, st.phi);
            let along = dot(p, e0).atan2(dot(p, p0));
            let cross = dot(p, pole).clamp(-1.0, 1.0).asin();
            (table.radius * along, table.radius * cross)
        })
        .unzip()
}

/// Render one trajectory chart.
pub fn trajectory_plot(table: &TrajectoryTable, kind: PlotKind) -> Result<String> {
    if table.is_empty() {
        return Err(Error::EmptyInput("trajectory table has no rows".into()));
    }
    let (down, cross) = ground_track(table);
    let y: Vec<f64> = match kind {
        PlotKind::Altitude => table.altitudes().iter().map(|h| h / 1000.0).collect(),
        PlotKind::VerticalVelocity => table.states.iter().map(|s| s.w).collect(),
        PlotKind::Downrange => down.iter().map(|d| d / 1000.0).collect(),
        PlotKind::HorizontalVelocity => table.states.iter().map(|s| s.u.hypot(s.v)).collect(),
        PlotKind::Crossrange => cross.iter().map(|d| d / 1000.0).collect(),
        PlotKind::Pitch => table.controls.iter().map(|c| c.beta.to_degrees()).collect(),
        PlotKind::Pareto => return Err(Error::validation("plot.kind", "the Pareto curve is drawn from a Pareto table")),
    };
    let points: Vec<(f64, f64)> = table.times.iter().copied().zip(y).collect();
    Ok(Chart::new(kind).line(&points).render())
}

/// Every trajectory chart with its file name.
pub fn trajectory_plots(table: &TrajectoryTable) -> Result<Vec<(&'static str, String)>> {
    PlotKind::TRAJECTORY.iter().map(|k| Ok((k.file_name(), trajectory_plot(table, *k)?))).collect()
}

/// Effective payload against thrust-to-mass ratio for the converged points,
/// with the maximizer marked and labelled.
pub fn pareto_plot(result: &ParetoResult) -> Result<String> {
    let points: Vec<(f64, f64)> =
        result.points.iter().filter(|p| p.converged()).map(|p| (p.thrust_to_mass0, p.effective_payload)).collect();
    if points.is_empty() {
        return Err(Error::EmptyInput("Pareto table has no converged points".into()));
    }
    let mut chart = Chart::new(PlotKind::Pareto).line(&points).markers(&points);
    if let Some(best) = result.best() {
        let label = format!("max {} m/s², {} kg", fmt_num(best.thrust_to_mass0, 3), fmt_num(best.effective_payload, 1));
        chart = chart.highlight((best.thrust_to_mass0, best.effective_payload), label);
    }
    Ok(chart.render())
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

struct Chart {
    kind: PlotKind,
    lines: Vec<Vec<(f64, f64)>>,
    markers: Vec<(f64, f64)>,
    highlight: Option<((f64, f64), String)>,
}

impl Chart {
    fn new(kind: PlotKind) -> Self {
        Self { kind, lines: Vec::new(), markers: Vec::new(), highlight: None }
    }

    fn line(mut self, points: &[(f64, f64)]) -> Self {
        self.lines.push(points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect());
        self
    }

    fn markers(mut self, points: &[(f64, f64)]) -> Self {
        self.markers.extend(points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()));
        self
    }

    fn highlight(mut self, at: (f64, f64), label: String) -> Self {
        self.highlight = Some((at, label));
        self
    }

    fn render(&self) -> String {
        let all: Vec<(f64, f64)> = self.lines.iter().flatten().chain(&self.markers).copied().collect();
        let (xlo, xhi) = padded_range(all.iter().map(|p| p.0));
        let (ylo, yhi) = padded_range(all.iter().map(|p| p.1));
        let xt = ticks(xlo, xhi);
        let yt = ticks(ylo, yhi);
        let (xlo, xhi) = (xlo.min(xt[0]), xhi.max(*xt.last().unwrap()));
        let (ylo, yhi) = (ylo.min(yt[0]), yhi.max(*yt.last().unwrap()));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - xlo) / (xhi - xlo) * pw;
        let sy = |y: f64| TOP + (yhi - y) / (yhi - ylo) * ph;
        let (title, xlabel, ylabel) = self.kind.labels();

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
        for &t in &xt {
            let x = sx(t);
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, TOP + ph);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, tick_label(t, &xt));
        }
        for &t in &yt {
            let y = sy(t);
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, tick_label(t, &yt));
        }
        let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 14.0, escape(xlabel));
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(ylabel)
        );
        for line in self.lines.iter().filter(|l| l.len() > 1) {
            let pts: Vec<String> = line.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>"##, pts.join(" "));
        }
        for &(x, y) in self.lines.iter().filter(|l| l.len() == 1).flatten().chain(&self.markers) {
            let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f5fa8"/>"##, sx(x), sy(y));
        }
        if let Some(((x, y), label)) = &self.highlight {
            let (cx, cy) = (sx(*x), sy(*y));
            let _ = writeln!(s, r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="6" fill="none" stroke="#c0392b" stroke-width="2"/>"##);
            let anchor = if cx > LEFT + pw / 2.0 { "end" } else { "start" };
            let dx = if anchor == "end" { -10.0 } else { 10.0 };
            let _ = writeln!(
                s,
                r##"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}" fill="#c0392b">{}</text>"##,
                cx + dx,
                (cy - 10.0).max(TOP + 12.0),
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(hi.abs()).max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// Round tick positions covering `[lo, hi]`, about six of them.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).floor() as i64;
    let last = (hi / step).ceil() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64, all: &[f64]) -> String {
    let step = if all.len() > 1 { all[1] - all[0] } else { 1.0 };
    let decimals = (-step.log10().floor()).max(0.0) as usize + usize::from(step / 10f64.powf(step.log10().floor()) == 2.5);
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.decimals$}")
}

fn fmt_num(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
