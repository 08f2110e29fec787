//! Static SVG figure of one planning cycle: lanes, obstacles with their
//! predictions, sampled candidates, the coarse choice and the refined plan.

use crate::behavioral::BehaviorCandidates;
use crate::geometry::{transform_polygon, Point2};
use crate::planner::Plan;
use crate::world::{Scenario, Trajectory};
use std::fmt::Write;

const WIDTH: f64 = 1200.0;
const MARGIN: f64 = 20.0;

struct Frame {
    x0: f64,
    y1: f64,
    scale: f64,
}

impl Frame {
    fn map(&self, p: &Point2) -> (f64, f64) {
        (
            MARGIN + (p.x - self.x0) * self.scale,
            MARGIN + (self.y1 - p.y) * self.scale,
        )
    }

    fn polyline(&self, pts: &[Point2]) -> String {
        pts.iter()
            .map(|p| {
                let (x, y) = self.map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn traj_points(t: &Trajectory) -> Vec<Point2> {
    t.positions()
}

/// Renders the figure. Candidates are thinned to at most `max_candidates`
/// per behavior.
pub fn render(
    scenario: &Scenario,
    sets: &[BehaviorCandidates],
    plan: &Plan,
    max_candidates: usize,
) -> String {
    let mut focus: Vec<Point2> = traj_points(&plan.refined.trajectory);
    focus.extend(traj_points(&plan.decision.coarse));
    for set in sets {
        for c in &set.candidates {
            focus.extend(c.trajectory.positions());
        }
    }
    let pad = 15.0;
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in &focus {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let (x0, x1, y0, y1) = (x0 - pad, x1 + pad, y0 - pad, y1 + pad);
    let scale = (WIDTH - 2.0 * MARGIN) / (x1 - x0).max(1.0);
    let height = (y1 - y0) * scale + 2.0 * MARGIN;
    let f = Frame { x0, y1, scale };
    let inside = |p: &Point2| p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for lane in &scenario.map.lanes {
        for (pts, style) in [
            (
                &lane.left_boundary,
                r##"stroke="#444444" stroke-width="1.5""##,
            ),
            (
                &lane.right_boundary,
                r##"stroke="#444444" stroke-width="1.5""##,
            ),
            (
                &lane.centerline,
                r##"stroke="#bbbbbb" stroke-width="1" stroke-dasharray="6,6""##,
            ),
        ] {
            let clipped: Vec<Point2> = pts.iter().copied().filter(inside).collect();
            if clipped.len() >= 2 {
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" {style}/>"#,
                    f.polyline(&clipped)
                );
            }
        }
    }
    for set in sets {
        let n = set.candidates.len();
        let stride = (n / max_candidates.max(1)).max(1);
        for c in set.candidates.iter().step_by(stride) {
            let _ = writeln!(
                s,
                r##"<polyline points="{}" fill="none" stroke="#9db7d5" stroke-width="0.6" opacity="0.5"/>"##,
                f.polyline(&c.trajectory.positions())
            );
        }
    }
    for ob in &scenario.obstacles {
        for pred in &ob.predictions {
            let path: Vec<Point2> = pred.poses.iter().map(|p| Point2::new(p.x, p.y)).collect();
            let _ = writeln!(
                s,
                r##"<polyline points="{}" fill="none" stroke="#e39b2d" stroke-width="1" stroke-dasharray="3,3" opacity="{:.2}"/>"##,
                f.polyline(&path),
                pred.probability.clamp(0.2, 1.0)
            );
        }
        let p0 = ob.most_likely().poses[0];
        let poly = transform_polygon(&ob.polygon, p0.x, p0.y, p0.theta);
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="#e39b2d" fill-opacity="0.6" stroke="#a86400"/>"##,
            f.polyline(&poly)
        );
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#2b59c3" stroke-width="2"/>"##,
        f.polyline(&traj_points(&plan.decision.coarse))
    );
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#d62828" stroke-width="2.5"/>"##,
        f.polyline(&traj_points(&plan.refined.trajectory))
    );
    let (sx, sy) = f.map(&scenario.sdv.position());
    let _ = writeln!(
        s,
        r##"<circle cx="{sx:.2}" cy="{sy:.2}" r="4" fill="#111111"/>"##
    );
    let _ = writeln!(
        s,
        r##"<text x="{MARGIN}" y="{:.0}" font-family="sans-serif" font-size="13" fill="#111111">{}: {} (coarse blue, refined red)</text>"##,
        MARGIN + 4.0,
        scenario.name,
        plan.decision.behavior.kind.name()
    );
    s.push_str("</svg>\n");
    s
}
