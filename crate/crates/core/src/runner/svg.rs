//! Minimal self-contained SVG charts.

use std::fmt::Write;

use crate::error::{MorlError, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#637939",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
        let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
        let _ = writeln!(s, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#);
        for (i, v) in [self.x.0, self.x.1].iter().enumerate() {
            let anchor = if i == 0 { "start" } else { "end" };
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#, self.px(*v), y0 + 16.0, fmt_tick(*v));
        }
        for v in [self.y.0, self.y.1] {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 4.0, self.py(v) + 4.0, fmt_tick(v));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(xlabel));
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(ylabel)
        );
        s
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Line chart of `ys` over `xs`, with an optional `±band` shaded area.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64], band: Option<&[f64]>) -> String {
    let lower: Vec<f64> = ys.iter().enumerate().map(|(i, y)| y - band.map_or(0.0, |b| b[i])).collect();
    let upper: Vec<f64> = ys.iter().enumerate().map(|(i, y)| y + band.map_or(0.0, |b| b[i])).collect();
    let frame = Frame {
        x: range(xs.iter().copied()),
        y: range(lower.iter().chain(&upper).copied()),
    };
    let mut s = frame.open(title, xlabel, ylabel);
    if band.is_some() && !xs.is_empty() {
        let mut d = String::new();
        for (i, x) in xs.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, frame.px(*x), frame.py(upper[i]));
        }
        for (i, x) in xs.iter().enumerate().rev() {
            let _ = write!(d, "L{:.2},{:.2} ", frame.px(*x), frame.py(lower[i]));
        }
        let _ = writeln!(s, r#"<path d="{}Z" fill="{}" fill-opacity="0.25" stroke="none"/>"#, d, PALETTE[0]);
    }
    let points: Vec<String> = xs.iter().zip(ys).map(|(x, y)| format!("{:.2},{:.2}", frame.px(*x), frame.py(*y))).collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, points.join(" "), PALETTE[0]);
    s.push_str("</svg>\n");
    s
}

/// Scatter plot of labelled 2-D points with a legend.
pub fn scatter(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64, usize)], legend: &[String]) -> String {
    let frame = Frame {
        x: range(points.iter().map(|p| p.0)),
        y: range(points.iter().map(|p| p.1)),
    };
    let mut s = frame.open(title, xlabel, ylabel);
    for &(x, y, class) in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.7"/>"#,
            frame.px(x),
            frame.py(y),
            PALETTE[class % PALETTE.len()]
        );
    }
    for (i, name) in legend.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            y - 9.0,
            PALETTE[i % PALETTE.len()],
            WIDTH - MARGIN + 16.0,
            y,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Replay signatures (first two components) coloured by buffer part.
pub fn signature_scatter(csv: &str) -> Result<String> {
    let mut points = Vec::new();
    for (i, line) in csv.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 5 {
            continue;
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| MorlError::Parse(format!("signature line {}", i + 1)));
        let class = usize::from(f[0] == "diverse");
        points.push((num(f[3])?, num(f[4])?, class));
    }
    Ok(scatter(
        "Replay signatures",
        "s_0",
        "s_1",
        &points,
        &["recent (FIFO)".to_string(), "diverse".to_string()],
    ))
}

/// Simplex partition: 2-objective weights on a line, 3-objective weights in
/// barycentric coordinates.
pub fn partition_scatter(points: &[(Vec<f64>, usize)], labels: &[String]) -> String {
    let projected: Vec<(f64, f64, usize)> = points
        .iter()
        .map(|(w, id)| match w.len() {
            2 => (w[0], 0.0, *id),
            _ => (w[1] + 0.5 * w.get(2).copied().unwrap_or(0.0), w.get(2).copied().unwrap_or(0.0) * 0.75f64.sqrt(), *id),
        })
        .collect();
    let (xl, yl) = if points.first().is_some_and(|(w, _)| w.len() == 2) { ("w_0", "") } else { ("w_1 + w_2/2", "w_2") };
    scatter("Optimal policy per weight", xl, yl, &projected, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let s = line_chart("t<1>", "x", "y", &[1.0, 2.0, 3.0], &[0.5, 0.2, 0.1], Some(&[0.1, 0.1, 0.0]));
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("t&lt;1&gt;"));
        assert!(s.contains("<polyline"));
        let empty = line_chart("e", "x", "y", &[], &[], None);
        assert!(empty.contains("</svg>"));
        let sig = signature_scatter("buffer,trajectory,length,s_0,s_1\nfifo,0,3,1.0,-2.0\ndiverse,4,2,0.5,-1.0\n").unwrap();
        assert_eq!(sig.matches("<circle").count(), 2);
        let p = partition_scatter(&[(vec![1.0, 0.0, 0.0], 0), (vec![0.0, 0.0, 1.0], 1)], &["a".into(), "b".into()]);
        assert_eq!(p.matches("<circle").count(), 2);
    }
}
