//! SVG renderings of planned trajectories.

use std::fmt::Write as _;

use crate::path::{Path, PathKind};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const OBSTACLE: &str = "#555555";
const PANEL: f64 = 360.0;
const MARGIN: f64 = 40.0;

fn color(index: usize, path: &Path) -> &'static str {
    if path.kind() == PathKind::Agent {
        PALETTE[index % PALETTE.len()]
    } else {
        OBSTACLE
    }
}

/// Linear map from a data range onto a panel.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        if !lo.is_finite() {
            return Axis { lo: 0.0, hi: 1.0 };
        }
        let pad = ((hi - lo) * 0.05).max(0.5);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn map(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo) * PANEL
    }

    fn scale(&self) -> f64 {
        PANEL / (self.hi - self.lo)
    }
}

struct Panel<'a> {
    title: &'a str,
    x_label: &'a str,
    y_label: &'a str,
    x: Axis,
    y: Axis,
}

impl Panel<'_> {
    fn begin(&self, out: &mut String, left: f64) {
        let _ = writeln!(out, r#"<g transform="translate({left},{MARGIN})">"#);
        let _ = writeln!(
            out,
            r#"<rect width="{PANEL}" height="{PANEL}" fill="white" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="-12" text-anchor="middle" font-size="14">{}</text>"#,
            PANEL / 2.0,
            self.title
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{} [{:.1}, {:.1}]</text>"#,
            PANEL / 2.0,
            PANEL + 20.0,
            self.x_label,
            self.x.lo,
            self.x.hi
        );
        let _ = writeln!(
            out,
            r#"<text transform="translate(-10,{}) rotate(-90)" text-anchor="middle" font-size="12">{} [{:.1}, {:.1}]</text>"#,
            PANEL / 2.0,
            self.y_label,
            self.y.lo,
            self.y.hi
        );
    }

    fn point(&self, x: f64, y: f64) -> (f64, f64) {
        (self.x.map(x), PANEL - self.y.map(y))
    }

    fn polyline(&self, out: &mut String, pts: impl Iterator<Item = (f64, f64)>, stroke: &str) {
        let coords: Vec<String> = pts
            .map(|(x, y)| {
                let (px, py) = self.point(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="2"/>"#,
            coords.join(" ")
        );
    }

    fn circle(&self, out: &mut String, x: f64, y: f64, r: f64, stroke: &str, fill: &str) {
        let (px, py) = self.point(x, y);
        let _ = writeln!(
            out,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="{:.2}" fill="{fill}" fill-opacity="0.25" stroke="{stroke}"/>"#,
            r * self.x.scale()
        );
    }
}

fn document(width: f64, title: &str, body: &str) -> String {
    let height = PANEL + 2.0 * MARGIN + 10.0;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\">\n<title>{title}</title>\n{body}</svg>\n"
    )
}

/// Top-down `(x, y)` view: agent tracks, obstacle tracks and body circles of
/// radius `r` at every start, goal and static obstacle.
pub fn top_down_svg(paths: &[Path], r: f64, title: &str) -> String {
    let xs = paths.iter().flat_map(|p| p.spheres().iter().map(|s| s.center.x));
    let ys = paths.iter().flat_map(|p| p.spheres().iter().map(|s| s.center.y));
    let (x, y) = square(Axis::of(xs), Axis::of(ys));
    let panel = Panel {
        title,
        x_label: "x (m)",
        y_label: "y (m)",
        x,
        y,
    };
    let mut body = String::new();
    panel.begin(&mut body, MARGIN);
    for (i, p) in paths.iter().enumerate() {
        let c = color(i, p);
        let s = p.spheres();
        if p.kind() == PathKind::StaticObstacle {
            if let Some(first) = s.first() {
                panel.circle(&mut body, first.center.x, first.center.y, r, c, c);
            }
            continue;
        }
        panel.polyline(&mut body, s.iter().map(|s| (s.center.x, s.center.y)), c);
        if p.kind() == PathKind::Agent {
            for end in [s.first(), s.last()].into_iter().flatten() {
                panel.circle(&mut body, end.center.x, end.center.y, r, c, "none");
            }
        }
    }
    body.push_str("</g>\n");
    document(PANEL + 2.0 * MARGIN, title, &body)
}

/// Side-by-side `x–y`, `x–t` and `y–t` projections of the space-time grid.
pub fn triptych_svg(paths: &[Path], title: &str) -> String {
    let moving = || paths.iter().filter(|p| p.kind() != PathKind::StaticObstacle);
    let x = Axis::of(paths.iter().flat_map(|p| p.spheres().iter().map(|s| s.center.x)));
    let y = Axis::of(paths.iter().flat_map(|p| p.spheres().iter().map(|s| s.center.y)));
    let t = Axis::of(moving().flat_map(|p| p.spheres().iter().map(|s| s.center.t)));
    let views: [(&str, &str, &str, Axis, Axis, fn(&crate::geometry::StgVector) -> (f64, f64)); 3] = [
        ("x–y", "x (m)", "y (m)", x, y, |c| (c.x, c.y)),
        ("x–t", "x (m)", "t (s)", x, t, |c| (c.x, c.t)),
        ("y–t", "y (m)", "t (s)", y, t, |c| (c.y, c.t)),
    ];
    let mut body = String::new();
    for (k, (name, xl, yl, ax, ay, project)) in views.into_iter().enumerate() {
        let panel = Panel {
            title: name,
            x_label: xl,
            y_label: yl,
            x: ax,
            y: ay,
        };
        panel.begin(&mut body, MARGIN + k as f64 * (PANEL + MARGIN * 1.5));
        for (i, p) in paths.iter().enumerate() {
            let pts: Vec<(f64, f64)> = if p.kind() == PathKind::StaticObstacle && k > 0 {
                // A static obstacle is a vertical line in the time views.
                let c = p.spheres()[0].center;
                let (v, _) = project(&c);
                vec![(v, t.lo), (v, t.hi)]
            } else {
                p.spheres().iter().map(|s| project(&s.center)).collect()
            };
            panel.polyline(&mut body, pts.into_iter(), color(i, p));
        }
        body.push_str("</g>\n");
    }
    document(3.0 * PANEL + 4.0 * MARGIN + 20.0, title, &body)
}

/// Widens the narrower axis so both share one scale.
fn square(x: Axis, y: Axis) -> (Axis, Axis) {
    let span = (x.hi - x.lo).max(y.hi - y.lo);
    let grow = |a: Axis| {
        let mid = (a.lo + a.hi) / 2.0;
        Axis {
            lo: mid - span / 2.0,
            hi: mid + span / 2.0,
        }
    };
    (grow(x), grow(y))
}
