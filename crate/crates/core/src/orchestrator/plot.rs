use std::fmt::Write;

use super::trace::{Record, TraceLog};
use crate::geometry::Shape;
use crate::reactive::ReplanKind;

const SCALE: f64 = 120.0;
const MARGIN: f64 = 20.0;
/// Belief ellipses below this determinant are too small to draw.
const MIN_DRAWN_DET: f64 = 1e-12;

struct Frame {
    x0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) * SCALE
    }

    fn y(&self, y: f64) -> f64 {
        MARGIN + (self.y1 - y) * SCALE
    }

    fn points(&self, pts: impl IntoIterator<Item = [f64; 2]>) -> String {
        pts.into_iter().map(|p| format!("{:.1},{:.1}", self.x(p[0]), self.y(p[1]))).collect::<Vec<_>>().join(" ")
    }
}

fn shape_svg(out: &mut String, f: &Frame, shape: &Shape, style: &str) {
    match shape {
        Shape::Disk { center, radius } => {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="{:.1}" {style}/>"#,
                f.x(center.x),
                f.y(center.y),
                radius * SCALE
            );
        }
        Shape::Polygon(p) => {
            let pts = f.points(p.vertices().iter().map(|v| [v.x, v.y]));
            let _ = writeln!(out, r#"<polygon points="{pts}" {style}/>"#);
        }
    }
}

/// Two-sigma ellipse axes and orientation (degrees) of a 2x2 covariance.
fn ellipse(cov: [f64; 3]) -> (f64, f64, f64) {
    let [a, b, c] = cov;
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let l1 = (mid + rad).max(0.0);
    let l2 = (mid - rad).max(0.0);
    let angle = 0.5 * (2.0 * b).atan2(a - c);
    (2.0 * l1.sqrt(), 2.0 * l2.sqrt(), angle.to_degrees())
}

/// Renders a trace as a standalone SVG: workspace, regions, obstacles,
/// the driven path, planned waypoints, invalidated waypoints (magenta),
/// belief ellipses and final object positions.
pub fn render_svg(trace: &TraceLog) -> String {
    let Some(Record::Header { workspace, regions, obstacles, objects, scenario, .. }) = trace.records.first() else {
        return String::from("<svg xmlns=\"http://www.w3.org/2000/svg\"/>\n");
    };
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in workspace {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let f = Frame { x0, y1 };
    let width = (x1 - x0) * SCALE + 2.0 * MARGIN;
    let height = (y1 - y0) * SCALE + 2.0 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(out, "<title>{scenario}</title>");
    let _ = writeln!(
        out,
        r#"<polygon points="{}" fill="white" stroke="black" stroke-width="2"/>"#,
        f.points(workspace.iter().copied())
    );
    for (j, r) in regions.iter().enumerate() {
        let _ = writeln!(out, r##"<polygon points="{}" fill="#d8f0d8" stroke="#4a4"/>"##, f.points(r.iter().copied()));
        let n = r.len() as f64;
        let (cx, cy) = r.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0] / n, b + p[1] / n));
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="14" fill="#282">{}</text>"##,
            f.x(cx),
            f.y(cy),
            j + 1
        );
    }

    let mut revealed: Vec<bool> = obstacles.iter().map(|o| o.known).collect();
    let mut path = Vec::new();
    let mut final_objects: Vec<[f64; 2]> = objects.iter().map(|o| o.position).collect();
    let mut body = String::new();
    for r in &trace.records {
        match r {
            Record::Reveal { obstacle, .. } => revealed[*obstacle] = true,
            Record::Step { x, y, .. } => path.push([*x, *y]),
            Record::Release { object, position, .. } => final_objects[*object] = *position,
            Record::Belief { objects, .. } => {
                for m in objects {
                    if m.det < MIN_DRAWN_DET {
                        continue;
                    }
                    let (a, b, deg) = ellipse(m.cov);
                    let _ = writeln!(
                        body,
                        r##"<ellipse cx="{:.1}" cy="{:.1}" rx="{:.1}" ry="{:.1}" transform="rotate({:.1} {:.1} {:.1})" fill="none" stroke="#c60" stroke-opacity="0.35"/>"##,
                        f.x(m.mean[0]),
                        f.y(m.mean[1]),
                        a * SCALE,
                        b * SCALE,
                        -deg,
                        f.x(m.mean[0]),
                        f.y(m.mean[1])
                    );
                }
            }
            Record::Plan { waypoints, grasp_target, .. } => {
                let _ = writeln!(
                    body,
                    r##"<polyline points="{}" fill="none" stroke="#3a3" stroke-dasharray="4 3"/>"##,
                    f.points(waypoints.iter().copied())
                );
                for w in waypoints {
                    let _ =
                        writeln!(body, r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="#3a3"/>"##, f.x(w[0]), f.y(w[1]));
                }
                let _ = writeln!(
                    body,
                    r##"<rect x="{:.1}" y="{:.1}" width="6" height="6" fill="#e80"/>"##,
                    f.x(grasp_target[0]) - 3.0,
                    f.y(grasp_target[1]) - 3.0
                );
            }
            Record::Replan { kind: ReplanKind::WaypointInvalid, point: Some(p), .. } => {
                let _ = writeln!(
                    body,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="6" fill="magenta" class="invalid-waypoint"/>"#,
                    f.x(p[0]),
                    f.y(p[1])
                );
            }
            _ => {}
        }
    }
    for (o, seen) in obstacles.iter().zip(&revealed) {
        let style = if *seen {
            r##"fill="#555" stroke="#222""##
        } else {
            r##"fill="#ccc" stroke="#888" stroke-dasharray="5 4""##
        };
        shape_svg(&mut out, &f, &o.shape, style);
    }
    for (o, p) in objects.iter().zip(&final_objects) {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.1}" cy="{:.1}" r="{:.1}" fill="none" stroke="#08a" stroke-dasharray="3 3"/>"##,
            f.x(o.position[0]),
            f.y(o.position[1]),
            o.radius * SCALE
        );
        let _ = writeln!(
            out,
            r##"<circle cx="{:.1}" cy="{:.1}" r="{:.1}" fill="#0bd" fill-opacity="0.7"/>"##,
            f.x(p[0]),
            f.y(p[1]),
            o.radius * SCALE
        );
    }
    out.push_str(&body);
    if !path.is_empty() {
        let _ =
            writeln!(out, r##"<polyline points="{}" fill="none" stroke="#24c" stroke-width="1.5"/>"##, f.points(path));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipse_axes_follow_eigenvalues() {
        let (a, b, deg) = ellipse([4.0, 0.0, 1.0]);
        assert!((a - 4.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && deg.abs() < 1e-12);
        let (a, b, deg) = ellipse([1.0, 0.0, 4.0]);
        assert!((a - 4.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && (deg.abs() - 90.0).abs() < 1e-9);
    }

    #[test]
    fn empty_trace_renders_empty_svg() {
        assert!(render_svg(&TraceLog::default()).starts_with("<svg"));
    }
}
