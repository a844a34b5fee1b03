//! Minimal self-contained SVG line plots.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::config::Scenario;
use crate::error::{BenchError, Result};
use crate::experiment::{Machine, ResultBundle, RunSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    EnergyTrace,
    SweepCurve,
    MuTrace,
}

impl FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "energy_trace" => Ok(PlotKind::EnergyTrace),
            "sweep_curve" => Ok(PlotKind::SweepCurve),
            "mu_trace" => Ok(PlotKind::MuTrace),
            other => Err(format!("unknown plot kind {other:?} (energy_trace, sweep_curve, mu_trace)")),
        }
    }
}

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

struct Curve {
    label: String,
    points: Vec<(f64, f64)>,
    /// Draw as a zero-order-hold staircase ending at this abscissa.
    hold_until: Option<f64>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(curves: &[Curve]) -> Frame {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for c in curves {
            for &(x, y) in c.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                f.x0 = f.x0.min(x);
                f.x1 = f.x1.max(x);
                f.y0 = f.y0.min(y);
                f.y1 = f.y1.max(y);
            }
            if let Some(end) = c.hold_until {
                f.x1 = f.x1.max(end);
            }
        }
        if f.x1 <= f.x0 {
            f.x0 -= 0.5;
            f.x1 += 0.5;
        }
        if f.y1 <= f.y0 {
            f.y0 -= 0.5;
            f.y1 += 0.5;
        }
        let pad = 0.05 * (f.y1 - f.y0);
        f.y0 -= pad;
        f.y1 += pad;
        f
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn label(x: f64) -> String {
    let s = format!("{:.3}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn render(title: &str, x_label: &str, y_label: &str, curves: &[Curve]) -> String {
    let f = Frame::fit(curves);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let (ax0, ax1, ay0, ay1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        s,
        r#"<path d="M{ax0} {ay0} V{ay1} H{ax1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let x = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let y = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let (px, py) = (f.px(x), f.py(y));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{ay1}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            ay1 + 5.0,
            ay1 + 18.0,
            label(x)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{py:.2}" x2="{ax0}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            ax0 - 5.0,
            ax0 - 8.0,
            py + 4.0,
            label(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        (ax0 + ax1) / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{y_label}</text>"#,
        (ay0 + ay1) / 2.0
    );
    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        let pts: Vec<(f64, f64)> = c
            .points
            .iter()
            .copied()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        for (j, &(x, y)) in pts.iter().enumerate() {
            let (px, py) = (f.px(x), f.py(y));
            if j == 0 {
                let _ = write!(d, "M{px:.2} {py:.2}");
            } else if c.hold_until.is_some() {
                let _ = write!(d, " H{px:.2} V{py:.2}");
            } else {
                let _ = write!(d, " L{px:.2} {py:.2}");
            }
        }
        if let Some(end) = c.hold_until {
            let _ = write!(d, " H{:.2}", f.px(end));
        }
        let _ = writeln!(
            s,
            r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"><title>{}</title></path>"#,
            c.label
        );
        if c.hold_until.is_none() && pts.len() <= 40 {
            for &(x, y) in &pts {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, f.px(x), f.py(y));
            }
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{4}</text>"#,
            W - RIGHT + 15.0,
            W - RIGHT + 35.0,
            W - RIGHT + 40.0,
            ly + 4.0,
            c.label
        );
    }
    s.push_str("</svg>\n");
    s
}

fn pick_series(bundle: &ResultBundle) -> Option<&RunSeries> {
    bundle
        .series
        .iter()
        .find(|s| s.machine == Machine::Caim)
        .or_else(|| bundle.series.first())
}

fn sweep_axis_label(s: Scenario) -> &'static str {
    match s {
        Scenario::MuSweep => "mu (dimensionless)",
        Scenario::TauSweep => "tau (phase time)",
        Scenario::NoiseSweep => "noise amplitude (dimensionless)",
        Scenario::RestartSweep => "restarts per instance",
        _ => "sweep value",
    }
}

pub fn render_svg(bundle: &ResultBundle, kind: PlotKind) -> Result<String> {
    match kind {
        PlotKind::EnergyTrace => {
            let s = pick_series(bundle).ok_or(BenchError::MissingSeries("energy_trace"))?;
            let take = |f: fn(&crate::experiment::EnergyPoint) -> f64| s.energy.iter().map(|p| (p.t, f(p))).collect();
            let curves = [
                Curve {
                    label: "E".into(),
                    points: take(|p| p.e),
                    hold_until: None,
                },
                Curve {
                    label: "K".into(),
                    points: take(|p| p.k),
                    hold_until: None,
                },
                Curve {
                    label: "R".into(),
                    points: take(|p| p.r),
                    hold_until: None,
                },
            ];
            Ok(render(
                &format!("energy trace ({})", s.machine.name()),
                "phase time",
                "energy (dimensionless)",
                &curves,
            ))
        }
        PlotKind::MuTrace => {
            let s = bundle
                .series
                .iter()
                .find(|s| s.mu_trace.is_some())
                .ok_or(BenchError::MissingSeries("mu_trace"))?;
            let trace = s.mu_trace.as_ref().expect("filtered");
            let shown = s.n.min(COLORS.len());
            let curves: Vec<Curve> = (0..shown)
                .map(|i| Curve {
                    label: format!("mu_{i}"),
                    points: trace.iter().map(|m| (m.t_start, m.mu[i])).collect(),
                    hold_until: Some(s.end_time),
                })
                .collect();
            Ok(render("injection strength", "phase time", "mu (dimensionless)", &curves))
        }
        PlotKind::SweepCurve => {
            if bundle.points.is_empty() {
                return Err(BenchError::MissingSeries("sweep_curve"));
            }
            let oracle = bundle.points.iter().all(|p| p.exact_success.is_some());
            let mut curves = Vec::new();
            for m in [Machine::Aim, Machine::Caim] {
                let points: Vec<(f64, f64)> = bundle
                    .points
                    .iter()
                    .filter(|p| p.machine == m)
                    .map(|p| {
                        let y = if oracle { p.exact_success.unwrap_or(0.0) } else { p.p_hat_mean };
                        (p.sweep_value, y)
                    })
                    .collect();
                if !points.is_empty() {
                    curves.push(Curve {
                        label: m.name().into(),
                        points,
                        hold_until: None,
                    });
                }
            }
            let y_label = if oracle {
                "exact success (fraction)"
            } else {
                "estimated success pHat (dimensionless)"
            };
            Ok(render(
                bundle.provenance.config.scenario.name(),
                sweep_axis_label(bundle.provenance.config.scenario),
                y_label,
                &curves,
            ))
        }
    }
}

pub fn emit_svg(bundle: &ResultBundle, kind: PlotKind, path: &Path) -> Result<()> {
    let text = render_svg(bundle, kind)?;
    std::fs::write(path, text).map_err(|e| BenchError::io(path, e))
}
