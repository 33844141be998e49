//! Level kinematic paths built from straight legs and circular arcs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

/// Horizontal path shape, lengths in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathShape {
    StraightLine,
    Circle {
        radius: f64,
        #[serde(default)]
        clockwise: bool,
    },
    Rectangle {
        length: f64,
        width: f64,
        #[serde(default)]
        corner_radius: f64,
    },
    FigureEight {
        radius: f64,
    },
    /// Local north/east waypoints joined by circular fillets. The set is
    /// rotated so the first leg points along the initial velocity.
    WaypointSpline {
        waypoints: Vec<[f64; 2]>,
        #[serde(default)]
        corner_radius: f64,
        #[serde(default)]
        closed: bool,
    },
}

/// Path plus speed profile `v(t) = v0 + amplitude * (1 - cos(2 pi t / period))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub shape: PathShape,
    #[serde(default)]
    pub speed_amplitude: f64,
    #[serde(default = "default_speed_period")]
    pub speed_period: f64,
}

fn default_speed_period() -> f64 {
    60.0
}

impl TrajectorySpec {
    pub fn new(shape: PathShape) -> Self {
        Self { shape, speed_amplitude: 0.0, speed_period: default_speed_period() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Straight {
        length: f64,
    },
    /// Signed turn (positive is clockwise seen from above, i.e. increasing yaw).
    Arc {
        radius: f64,
        angle: f64,
    },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length } => length,
            Segment::Arc { radius, angle } => radius * angle.abs(),
        }
    }

    fn heading_change(&self) -> f64 {
        match *self {
            Segment::Straight { .. } => 0.0,
            Segment::Arc { angle, .. } => angle,
        }
    }
}

/// Arc-length parametrized heading along a segment chain.
#[derive(Debug, Clone)]
pub struct Path {
    segments: Vec<Segment>,
    starts: Vec<f64>,
    start_headings: Vec<f64>,
    total: f64,
    closed: bool,
    heading0: f64,
}

impl Path {
    pub fn new(segments: Vec<Segment>, closed: bool, heading0: f64) -> Result<Self> {
        let mut starts = Vec::with_capacity(segments.len());
        let mut start_headings = Vec::with_capacity(segments.len());
        let mut s = 0.0;
        let mut h = 0.0;
        for seg in &segments {
            match *seg {
                Segment::Straight { length } if !(length >= 0.0) || !length.is_finite() => {
                    return Err(NavError::Validation(format!("invalid straight length {length}")));
                }
                Segment::Arc { radius, angle } if !(radius > 0.0) || !angle.is_finite() => {
                    return Err(NavError::Validation(format!(
                        "arc needs a positive radius and finite angle (radius {radius})"
                    )));
                }
                _ => {}
            }
            starts.push(s);
            start_headings.push(h);
            s += seg.length();
            h += seg.heading_change();
        }
        if segments.is_empty() || !(s > 0.0) {
            return Err(NavError::Validation("path has zero length".into()));
        }
        Ok(Self { segments, starts, start_headings, total: s, closed, heading0 })
    }

    pub fn length(&self) -> f64 {
        self.total
    }

    /// Heading (yaw, radians, not wrapped) after travelling `s` metres.
    pub fn heading(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        let (laps, s) = if self.closed {
            let laps = (s / self.total).floor();
            (laps, s - laps * self.total)
        } else {
            (0.0, s)
        };
        let lap_turn: f64 = if self.closed { self.segments.iter().map(Segment::heading_change).sum() } else { 0.0 };
        let i = match self.starts.partition_point(|&x| x <= s) {
            0 => 0,
            n => n - 1,
        };
        let seg = self.segments[i];
        let into = (s - self.starts[i]).min(seg.length());
        let local = match seg {
            Segment::Straight { .. } => 0.0,
            Segment::Arc { radius, angle } => angle.signum() * into / radius,
        };
        self.heading0 + laps * lap_turn + self.start_headings[i] + local
    }

    /// Signed curvature (1/m) at arc length `s`.
    pub fn curvature(&self, s: f64) -> f64 {
        let s = if self.closed { s.rem_euclid(self.total) } else { s.max(0.0) };
        let i = match self.starts.partition_point(|&x| x <= s) {
            0 => 0,
            n => n - 1,
        };
        match self.segments[i] {
            Segment::Arc { radius, angle } if s - self.starts[i] <= self.segments[i].length() => {
                angle.signum() / radius
            }
            _ => 0.0,
        }
    }
}

/// Build the arc-length path for a shape starting at heading `heading0`.
pub fn build_path(shape: &PathShape, heading0: f64) -> Result<Path> {
    match shape {
        PathShape::StraightLine => Path::new(vec![Segment::Straight { length: 1.0 }], true, heading0),
        PathShape::Circle { radius, clockwise } => {
            check_radius(*radius)?;
            let sign = if *clockwise { 1.0 } else { -1.0 };
            Path::new(vec![Segment::Arc { radius: *radius, angle: sign * 2.0 * PI }], true, heading0)
        }
        PathShape::Rectangle { length, width, corner_radius } => {
            let r = *corner_radius;
            if !(r >= 0.0) || !(*length > 2.0 * r) || !(*width > 2.0 * r) {
                return Err(NavError::Validation(format!(
                    "rectangle {length} x {width} cannot hold corners of radius {r}"
                )));
            }
            let mut segs = Vec::new();
            for side in [*length, *width, *length, *width] {
                segs.push(Segment::Straight { length: side - 2.0 * r });
                segs.push(corner(r, PI / 2.0)?);
            }
            Path::new(segs, true, heading0)
        }
        PathShape::FigureEight { radius } => {
            check_radius(*radius)?;
            Path::new(
                vec![
                    Segment::Arc { radius: *radius, angle: 2.0 * PI },
                    Segment::Arc { radius: *radius, angle: -2.0 * PI },
                ],
                true,
                heading0,
            )
        }
        PathShape::WaypointSpline { waypoints, corner_radius, closed } => {
            waypoint_path(waypoints, *corner_radius, *closed, heading0)
        }
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(NavError::Validation(format!("turn radius must be positive, got {r}")));
    }
    Ok(())
}

fn corner(r: f64, angle: f64) -> Result<Segment> {
    check_radius(r)?;
    Ok(Segment::Arc { radius: r, angle })
}

fn waypoint_path(points: &[[f64; 2]], r: f64, closed: bool, heading0: f64) -> Result<Path> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    if closed && pts.first() != pts.last() {
        pts.push(pts[0]);
    }
    if pts.len() < 2 {
        return Err(NavError::Validation("waypoint path needs at least two points".into()));
    }
    let legs: Vec<(f64, f64)> = pts
        .windows(2)
        .map(|w| {
            let (dn, de) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
            ((dn * dn + de * de).sqrt(), de.atan2(dn))
        })
        .collect();
    if legs.iter().any(|(l, _)| !(*l > 0.0)) {
        return Err(NavError::Validation("repeated waypoint".into()));
    }
    let n = legs.len();
    let n_turns = if closed { n } else { n - 1 };
    let mut turns = Vec::with_capacity(n_turns);
    for i in 0..n_turns {
        let a = legs[i].1;
        let b = legs[(i + 1) % n].1;
        let turn = crate::strapdown::wrap_pi(b - a);
        if (turn.abs() - PI).abs() < 1e-9 {
            return Err(NavError::Validation("waypoint path reverses direction".into()));
        }
        turns.push(turn);
    }
    let cut = |turn: f64| if turn == 0.0 { 0.0 } else { r * (turn.abs() / 2.0).tan() };
    let mut segs = Vec::new();
    for i in 0..n {
        let before = if i > 0 || closed { cut(turns[(i + n - 1) % n]) } else { 0.0 };
        let after = if i < n_turns { cut(turns[i]) } else { 0.0 };
        let straight = legs[i].0 - before - after;
        if straight < -1e-9 {
            return Err(NavError::Validation(format!("leg {i} is too short for corner radius {r}")));
        }
        segs.push(Segment::Straight { length: straight.max(0.0) });
        if i < n_turns && turns[i] != 0.0 {
            segs.push(corner(r, turns[i])?);
        }
    }
    if !closed {
        // past the last waypoint the vehicle keeps its final heading
        segs.push(Segment::Straight { length: 1e12 });
    }
    Path::new(segs, closed, heading0)
}

/// Speed and travelled distance at time `t` for the profile of `spec`.
pub fn speed_profile(spec: &TrajectorySpec, v0: f64, t: f64) -> (f64, f64) {
    let a = spec.speed_amplitude;
    if a == 0.0 {
        return (v0, v0 * t);
    }
    let w = 2.0 * PI / spec.speed_period;
    (v0 + a * (1.0 - (w * t).cos()), v0 * t + a * (t - (w * t).sin() / w))
}

pub fn validate_spec(spec: &TrajectorySpec, v0: f64) -> Result<()> {
    if spec.speed_amplitude != 0.0 {
        if !(spec.speed_period > 0.0) {
            return Err(NavError::Validation("speed period must be positive".into()));
        }
        if v0 + 2.0 * spec.speed_amplitude < 0.0 {
            return Err(NavError::Validation("speed modulation would make the speed negative".into()));
        }
    }
    if !(v0 >= 0.0) || !v0.is_finite() {
        return Err(NavError::Validation(format!("speed must be non-negative, got {v0}")));
    }
    Ok(())
}
