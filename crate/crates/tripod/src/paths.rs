//! Beam-displacement trajectories d(t): piecewise lines and circular arcs.
//!
//! Segments join continuously; the speed |d′(t)| is constant within each
//! segment. Corner turns are instantaneous (no smoothing ramp) — an optional
//! cosine ramp can be added per segment for leakage studies.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec2};

/// One piece of a displacement trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Segment {
    Line {
        /// Unit direction of motion.
        direction: Vec2,
        speed: f64,
        duration: f64,
        /// Cosine speed ramp time applied symmetrically at both ends while
        /// keeping the segment displacement fixed. Zero = instantaneous
        /// corner turns.
        #[serde(default)]
        ramp: f64,
    },
    Arc {
        center: Vec2,
        radius: f64,
        start_angle: f64,
        /// Signed angular velocity; speed = |angular_velocity| · radius.
        angular_velocity: f64,
        duration: f64,
    },
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match self {
            Segment::Line { duration, .. } | Segment::Arc { duration, .. } => *duration,
        }
    }

    pub fn speed(&self) -> f64 {
        match self {
            Segment::Line { speed, .. } => *speed,
            Segment::Arc { radius, angular_velocity, .. } => radius * angular_velocity.abs(),
        }
    }

    /// Arc-length progress within the segment at local time `t`.
    fn progress(&self, t: f64) -> f64 {
        match self {
            Segment::Line { speed, duration, ramp, .. } => {
                if *ramp <= 0.0 {
                    return speed * t;
                }
                // cosine speed ramp of width tau at both ends, peak speed
                // rescaled so the segment displacement stays speed * duration
                let tau = ramp.min(duration / 2.0);
                let peak = speed * duration / (duration - tau);
                let ramp_int =
                    |s: f64| 0.5 * (s - tau / std::f64::consts::PI * (std::f64::consts::PI * s / tau).sin());
                let units = if t < tau {
                    ramp_int(t)
                } else if t <= duration - tau {
                    ramp_int(tau) + (t - tau)
                } else {
                    (duration - tau) - ramp_int(duration - t)
                };
                peak * units
            }
            Segment::Arc { radius, angular_velocity, .. } => radius * angular_velocity.abs() * t,
        }
    }

    fn offset(&self, t: f64) -> Vec2 {
        match self {
            Segment::Line { direction, .. } => *direction * self.progress(t),
            Segment::Arc { center, radius, start_angle, angular_velocity, .. } => {
                let theta = start_angle + angular_velocity * t;
                let start = *center + Vec2::from_angle(*start_angle) * *radius;
                *center + Vec2::from_angle(theta) * *radius - start
            }
        }
    }

    fn velocity(&self, t: f64) -> Vec2 {
        match self {
            Segment::Line { direction, speed, duration, ramp } => {
                if *ramp <= 0.0 {
                    return *direction * *speed;
                }
                let tau = ramp.min(duration / 2.0);
                let plateau = duration - 2.0 * tau;
                let eff = plateau + tau;
                let peak = speed * duration / eff;
                let shape = if t < tau {
                    0.5 * (1.0 - (std::f64::consts::PI * t / tau).cos())
                } else if t < tau + plateau {
                    1.0
                } else {
                    0.5 * (1.0 - (std::f64::consts::PI * (duration - t) / tau).cos())
                };
                *direction * (peak * shape)
            }
            Segment::Arc { radius, start_angle, angular_velocity, .. } => {
                let theta = start_angle + angular_velocity * t;
                Vec2::new(-theta.sin(), theta.cos()) * (*radius * *angular_velocity)
            }
        }
    }
}

/// Piecewise trajectory of the beam displacement, starting at d = 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamPath {
    segments: Vec<Segment>,
    /// Displacement at the start of each segment.
    starts: Vec<Vec2>,
    /// Time at the start of each segment.
    times: Vec<f64>,
    total: f64,
    end: Vec2,
}

impl BeamPath {
    pub fn new(segments: Vec<Segment>) -> Self {
        let mut starts = Vec::with_capacity(segments.len());
        let mut times = Vec::with_capacity(segments.len());
        let mut pos = Vec2::ZERO;
        let mut t = 0.0;
        for seg in &segments {
            starts.push(pos);
            times.push(t);
            pos += seg.offset(seg.duration());
            t += seg.duration();
        }
        BeamPath { segments, starts, times, total: t, end: pos }
    }

    /// Path that never moves (static beams).
    pub fn rest() -> Self {
        Self::new(Vec::new())
    }

    pub fn total_duration(&self) -> f64 {
        self.total
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Segment start times (useful as analysis instants).
    pub fn segment_times(&self) -> Vec<f64> {
        let mut t = self.times.clone();
        t.push(self.total);
        t
    }

    pub fn end_displacement(&self) -> Vec2 {
        self.end
    }

    fn locate(&self, t: f64) -> Option<(usize, f64)> {
        if t < 0.0 || t > self.total * (1.0 + 1e-12) + 1e-12 {
            return None;
        }
        // binary search over segment start times
        let mut idx = match self.times.binary_search_by(|t0| t0.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        if idx >= self.segments.len() {
            idx = self.segments.len().saturating_sub(1);
        }
        Some((idx, t - self.times[idx]))
    }

    /// Displacement at time t ∈ [0, total]; out of range is an error.
    pub fn displacement_at(&self, t: f64) -> Result<Vec2> {
        if self.segments.is_empty() {
            return if t == 0.0 {
                Ok(Vec2::ZERO)
            } else {
                Err(Error::PathRange { t, total: self.total })
            };
        }
        let (idx, local) = self
            .locate(t)
            .ok_or(Error::PathRange { t, total: self.total })?;
        Ok(self.starts[idx] + self.segments[idx].offset(local.min(self.segments[idx].duration())))
    }

    /// Displacement with times beyond the path clamped to the final value
    /// (beams stop and stay once the path ends).
    pub fn displacement_clamped(&self, t: f64) -> Vec2 {
        if self.segments.is_empty() || t <= 0.0 {
            return if t >= self.total { self.end } else { Vec2::ZERO };
        }
        if t >= self.total {
            return self.end;
        }
        self.displacement_at(t).unwrap_or(self.end)
    }

    /// Velocity at time t ∈ [0, total]; out of range is an error.
    pub fn velocity_at(&self, t: f64) -> Result<Vec2> {
        if self.segments.is_empty() {
            return if t == 0.0 {
                Ok(Vec2::ZERO)
            } else {
                Err(Error::PathRange { t, total: self.total })
            };
        }
        let (idx, local) = self
            .locate(t)
            .ok_or(Error::PathRange { t, total: self.total })?;
        Ok(self.segments[idx].velocity(local.min(self.segments[idx].duration())))
    }
}

/// Incremental path construction; keeps the cursor so segments join
/// continuously.
pub struct PathBuilder {
    segments: Vec<Segment>,
    cursor: Vec2,
}

/// Turn sense of an arc, viewed in the x–z plane (x right, z up).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turn {
    /// Direction angle increases.
    CounterClockwise,
    /// Direction angle decreases.
    Clockwise,
}

impl Default for PathBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl PathBuilder {
    pub fn new() -> Self {
        PathBuilder { segments: Vec::new(), cursor: Vec2::ZERO }
    }

    /// Straight segment of given unit direction, speed and duration.
    pub fn line(mut self, direction: Vec2, speed: f64, duration: f64) -> Self {
        let direction = direction.normalized().expect("line direction must be nonzero");
        self.cursor += direction * (speed * duration);
        self.segments.push(Segment::Line { direction, speed, duration, ramp: 0.0 });
        self
    }

    /// Arc starting in `initial_direction`, turning with the given sense,
    /// covering `sweep` radians of the circle at constant speed.
    pub fn arc(mut self, initial_direction: Vec2, turn: Turn, radius: f64, speed: f64, sweep: f64) -> Self {
        let u = initial_direction
            .normalized()
            .expect("arc direction must be nonzero");
        let sign = match turn {
            Turn::CounterClockwise => 1.0,
            Turn::Clockwise => -1.0,
        };
        let center = self.cursor + u.rotated(sign * std::f64::consts::FRAC_PI_2) * radius;
        let start_angle = (self.cursor - center).angle();
        let angular_velocity = sign * speed / radius;
        let duration = sweep * radius / speed;
        let seg = Segment::Arc { center, radius, start_angle, angular_velocity, duration };
        self.cursor += seg.offset(duration);
        self.segments.push(seg);
        self
    }

    pub fn build(self) -> BeamPath {
        BeamPath::new(self.segments)
    }
}

/// Square traversed A→B→C→D→A (sides +x̂, −ẑ, −x̂, +ẑ) with side length `a`;
/// the first two sides at `v12`, the last two at `v34`.
pub fn square_cw(a: f64, v12: f64, v34: f64) -> BeamPath {
    PathBuilder::new()
        .line(Vec2::new(1.0, 0.0), v12, a / v12)
        .line(Vec2::new(0.0, -1.0), v12, a / v12)
        .line(Vec2::new(-1.0, 0.0), v34, a / v34)
        .line(Vec2::new(0.0, 1.0), v34, a / v34)
        .build()
}

/// Square traversed A→D→C→B→A (sides −ẑ, +x̂, +ẑ, −x̂); the first three
/// sides at `v123`, the last at `v4`.
pub fn square_ccw(a: f64, v123: f64, v4: f64) -> BeamPath {
    PathBuilder::new()
        .line(Vec2::new(0.0, -1.0), v123, a / v123)
        .line(Vec2::new(1.0, 0.0), v123, a / v123)
        .line(Vec2::new(0.0, 1.0), v123, a / v123)
        .line(Vec2::new(-1.0, 0.0), v4, a / v4)
        .build()
}

/// Equilateral triangle, clockwise: first side +x̂, then two −120° turns.
pub fn triangle_cw(a: f64, v: f64) -> BeamPath {
    let d1 = Vec2::from_angle(0.0);
    let d2 = Vec2::from_angle(-2.0 * std::f64::consts::FRAC_PI_3);
    let d3 = Vec2::from_angle(-4.0 * std::f64::consts::FRAC_PI_3);
    PathBuilder::new()
        .line(d1, v, a / v)
        .line(d2, v, a / v)
        .line(d3, v, a / v)
        .build()
}

/// The same triangle traversed counter-clockwise.
pub fn triangle_ccw(a: f64, v: f64) -> BeamPath {
    let d1 = Vec2::from_angle(-std::f64::consts::FRAC_PI_3);
    let d2 = Vec2::from_angle(std::f64::consts::FRAC_PI_3);
    let d3 = Vec2::from_angle(std::f64::consts::PI);
    PathBuilder::new()
        .line(d1, v, a / v)
        .line(d2, v, a / v)
        .line(d3, v, a / v)
        .build()
}

/// Clockwise circle starting at the origin, initial motion along +ẑ.
pub fn circle(r_l: f64, v_d: f64, sweep: f64) -> BeamPath {
    PathBuilder::new()
        .arc(Vec2::new(0.0, 1.0), Turn::Clockwise, r_l, v_d, sweep)
        .build()
}

/// Clockwise arc to the point F at `sweep` radians, then straight along the
/// tangent there for `tangent_duration`.
pub fn circle_then_tangent(r_l: f64, v_d: f64, sweep: f64, tangent_duration: f64) -> BeamPath {
    let tangent_dir = Vec2::from_angle(std::f64::consts::FRAC_PI_2 - sweep);
    PathBuilder::new()
        .arc(Vec2::new(0.0, 1.0), Turn::Clockwise, r_l, v_d, sweep)
        .line(tangent_dir, v_d, tangent_duration)
        .build()
}

/// Single straight displacement along +x̂ (the A–B line scenario).
pub fn line_x(v: f64, duration: f64) -> BeamPath {
    PathBuilder::new().line(Vec2::new(1.0, 0.0), v, duration).build()
}

/// Named paths: the paper-scale protocols plus scaled-down test variants.
pub fn builtin_scenarios() -> Vec<(&'static str, BeamPath)> {
    vec![
        // paper scale: a = 100/κ, first sides 20 m/(ħκ²), later 40
        ("square_cw", square_cw(100.0, 5.0, 2.5)),
        ("square_ccw", square_ccw(100.0, 5.0, 2.5)),
        ("triangle_cw", triangle_cw(100.0, 5.0)),
        ("triangle_ccw", triangle_ccw(100.0, 5.0)),
        ("circle", circle(75.0, 1.5, 2.0 * std::f64::consts::PI)),
        (
            "circle_then_tangent",
            circle_then_tangent(75.0, 1.5, std::f64::consts::FRAC_PI_2, 50.0),
        ),
        ("line", line_x(5.0, 20.0)),
        // scaled variants used by the desk-scale validation runs
        ("line_scaled", line_x(5.0, 8.0)),
        ("square_cw_scaled", square_cw(40.0, 5.0, 2.5)),
        ("square_ccw_scaled", square_ccw(40.0, 5.0, 2.5)),
        ("triangle_cw_scaled", triangle_cw(40.0, 5.0)),
        ("triangle_ccw_scaled", triangle_ccw(40.0, 5.0)),
        ("circle_scaled", circle(30.0, 1.5, std::f64::consts::PI)),
        (
            "circle_then_tangent_scaled",
            circle_then_tangent(30.0, 1.5, std::f64::consts::FRAC_PI_2, 20.0),
        ),
    ]
}
