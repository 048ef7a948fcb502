//! SVG snapshots of a single tick.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::engine::{EntitySnapshot, TickRecord};
use crate::model::{Point, RelationState};

const SCALE: f64 = 80.0;
const MARGIN: f64 = 1.5;
const FOV_REACH: f64 = 1.2;

fn color_for(state: RelationState) -> &'static str {
    match state {
        RelationState::Engaged => "#2a9d8f",
        RelationState::Requested | RelationState::Buildup => "#e9a23b",
        RelationState::Passive => "#cccccc",
    }
}

struct Frame {
    min: Point,
    max: Point,
}

impl Frame {
    fn fit(record: &TickRecord) -> Self {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut grow = |p: Point, r: f64| {
            min.x = min.x.min(p.x - r);
            min.y = min.y.min(p.y - r);
            max.x = max.x.max(p.x + r);
            max.y = max.y.max(p.y + r);
        };
        for e in &record.entities {
            grow(e.pose.position, e.pose.body_radius);
        }
        for f in &record.formations {
            grow(f.o_center, f.r_outer_radius);
        }
        if record.entities.is_empty() {
            grow(Point::new(0.0, 0.0), 1.0);
        }
        Self {
            min: Point::new(min.x - MARGIN, min.y - MARGIN),
            max: Point::new(max.x + MARGIN, max.y + MARGIN),
        }
    }

    fn width(&self) -> f64 {
        (self.max.x - self.min.x) * SCALE
    }

    fn height(&self) -> f64 {
        (self.max.y - self.min.y) * SCALE
    }

    /// World to SVG coordinates; SVG y grows downward.
    fn map(&self, p: Point) -> (f64, f64) {
        ((p.x - self.min.x) * SCALE, (self.max.y - p.y) * SCALE)
    }
}

fn fov_path(frame: &Frame, e: &EntitySnapshot) -> String {
    let c = e.pose.position;
    let (cx, cy) = frame.map(c);
    let r = FOV_REACH * SCALE;
    if e.fov_half_angle >= PI {
        return format!(r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" class="fov"/>"#);
    }
    let a0 = e.pose.heading - e.fov_half_angle;
    let a1 = e.pose.heading + e.fov_half_angle;
    let (x0, y0) = frame.map(c + Point::from_polar(FOV_REACH, a0));
    let (x1, y1) = frame.map(c + Point::from_polar(FOV_REACH, a1));
    let large = if 2.0 * e.fov_half_angle > PI { 1 } else { 0 };
    // counter-clockwise in world space is sweep-flag 0 once y is flipped
    format!(
        r#"<path d="M {cx:.2} {cy:.2} L {x0:.2} {y0:.2} A {r:.2} {r:.2} 0 {large} 0 {x1:.2} {y1:.2} Z" class="fov"/>"#
    )
}

/// Renders one tick: F-formation rings, fields of view, state links, focus
/// arrows and bodies with heading marks.
pub fn render_svg(record: &TickRecord) -> String {
    let frame = Frame::fit(record);
    let mut s = String::new();
    let (w, h) = (frame.width(), frame.height());
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    s.push_str(
        "<defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" markerWidth=\"6\" markerHeight=\"6\" orient=\"auto-start-reverse\"><path d=\"M 0 0 L 10 5 L 0 10 z\" fill=\"#264653\"/></marker></defs>\n",
    );
    s.push_str(
        "<style>.fov{fill:#8ab6d6;fill-opacity:0.15;stroke:none}.body{fill:#ffffff;stroke:#264653;stroke-width:2}.object{fill:#e0e0e0;stroke:#555555;stroke-width:2}.ring{fill:none;stroke-width:1.5}.label{font-family:sans-serif;font-size:12px;fill:#264653}</style>\n",
    );
    let _ = writeln!(
        s,
        r##"<rect width="{w:.2}" height="{h:.2}" fill="#fbfbf8"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="8" y="18" class="label">tick {}</text>"#,
        record.tick
    );

    for f in &record.formations {
        let (cx, cy) = frame.map(f.o_center);
        let rings = [
            (f.r_outer_radius, "#bbbbbb", "4 4"),
            (f.p_outer_radius, "#999999", "none"),
            (f.o_radius, "#2a9d8f", "2 3"),
        ];
        for (r, color, dash) in rings {
            let _ = writeln!(
                s,
                r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" class="ring" stroke="{color}" stroke-dasharray="{dash}"/>"#,
                r * SCALE
            );
        }
    }

    for e in &record.entities {
        s.push_str(&fov_path(&frame, e));
        s.push('\n');
    }

    // one link per unordered pair, coloured by the stronger side
    for (a, b, st) in record.states.iter() {
        if a >= b {
            continue;
        }
        let back = record.states.get(b, a).unwrap_or(RelationState::Passive);
        let shown = if st == RelationState::Engaged || back == RelationState::Engaged {
            RelationState::Engaged
        } else if st != RelationState::Passive {
            st
        } else {
            back
        };
        if shown == RelationState::Passive {
            continue;
        }
        let (Some(ea), Some(eb)) = (record.entity(a), record.entity(b)) else {
            continue;
        };
        let (x0, y0) = frame.map(ea.pose.position);
        let (x1, y1) = frame.map(eb.pose.position);
        let _ = writeln!(
            s,
            r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="{}" stroke-width="6" stroke-opacity="0.5"/>"#,
            color_for(shown)
        );
    }

    for (&from, &to) in &record.focus_map {
        if from == to {
            continue;
        }
        let (Some(ea), Some(eb)) = (record.entity(from), record.entity(to)) else {
            continue;
        };
        let d = eb.pose.position - ea.pose.position;
        let len = d.norm();
        if len <= ea.pose.body_radius + eb.pose.body_radius {
            continue;
        }
        let u = d * (1.0 / len);
        let start = ea.pose.position + u * ea.pose.body_radius;
        let end = eb.pose.position - u * eb.pose.body_radius;
        let (x0, y0) = frame.map(start);
        let (x1, y1) = frame.map(end);
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" class="focus" data-from="{}" data-to="{}" stroke="#264653" stroke-width="1.5" marker-end="url(#arrow)"/>"##,
            from.0, to.0
        );
    }

    for e in &record.entities {
        let (cx, cy) = frame.map(e.pose.position);
        let class = if e.engageable { "body" } else { "object" };
        let _ = writeln!(
            s,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" class="{class}"/>"#,
            e.pose.body_radius * SCALE
        );
        let (hx, hy) =
            frame.map(e.pose.position + Point::from_polar(e.pose.body_radius, e.pose.heading));
        let _ = writeln!(
            s,
            r##"<line x1="{cx:.2}" y1="{cy:.2}" x2="{hx:.2}" y2="{hy:.2}" stroke="#264653" stroke-width="2"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" class="label" text-anchor="middle">{}</text>"#,
            cx,
            cy + e.pose.body_radius * SCALE + 14.0,
            escape(&e.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
