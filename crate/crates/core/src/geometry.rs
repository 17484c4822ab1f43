//! Planar geometry shared by every layer of the simulator.
//!
//! Everything here is generic over the scalar type so the primitives can be
//! exercised in `f32` as well as `f64`; the simulation itself runs on the
//! `f64` aliases re-exported at the crate root.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_traits::{Float, FloatConst};
use serde::{Deserialize, Serialize};

/// Floating point scalar usable by the geometry layer.
pub trait Scalar: Float + FloatConst + Debug + Default + Send + Sync + 'static {
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle<T: Scalar>(angle: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut a = (angle + T::PI()) % two_pi;
    if a < T::zero() {
        a = a + two_pi;
    }
    let out = a - T::PI();
    // (x % 2π) can land exactly on 2π after the correction above
    if out >= T::PI() {
        out - two_pi
    } else {
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// Unit vector pointing along `angle`.
    #[inline]
    pub fn from_angle(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, s)
    }

    #[inline]
    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the planar cross product `self × other`.
    #[inline]
    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::epsilon() {
            Some(self * (T::one() / n))
        } else {
            None
        }
    }

    /// Counter-clockwise perpendicular.
    #[inline]
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    #[inline]
    pub fn rotate(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    #[inline]
    pub fn lerp(self, other: Self, t: T) -> Self {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> AddAssign for Vec2<T> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> SubAssign for Vec2<T> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Scalar> Mul<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: T) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl<T: Scalar> Neg for Vec2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Position plus heading; heading is kept in `[-π, π)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose<T> {
    pub position: Vec2<T>,
    pub heading: T,
}

impl<T: Scalar> Pose<T> {
    pub fn new(position: Vec2<T>, heading: T) -> Self {
        Self { position, heading: normalize_angle(heading) }
    }

    #[inline]
    pub fn forward(&self) -> Vec2<T> {
        Vec2::from_angle(self.heading)
    }

    /// Expresses a world point in this pose's frame (x forward, y left).
    pub fn to_local(&self, p: Vec2<T>) -> Vec2<T> {
        (p - self.position).rotate(-self.heading)
    }

    pub fn to_world(&self, local: Vec2<T>) -> Vec2<T> {
        local.rotate(self.heading) + self.position
    }
}

/// Oriented rectangle: centre, heading of the long axis, half extents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obb<T> {
    pub center: Vec2<T>,
    pub heading: T,
    pub half_length: T,
    pub half_width: T,
}

impl<T: Scalar> Obb<T> {
    pub fn new(center: Vec2<T>, heading: T, length: T, width: T) -> Self {
        let half = T::lit(0.5);
        Self { center, heading, half_length: length * half, half_width: width * half }
    }

    /// Unit axes (length direction, width direction).
    pub fn axes(&self) -> [Vec2<T>; 2] {
        let f = Vec2::from_angle(self.heading);
        [f, f.perp()]
    }

    /// Corners in counter-clockwise order starting front-left.
    pub fn corners(&self) -> [Vec2<T>; 4] {
        let [f, l] = self.axes();
        let fx = f * self.half_length;
        let ly = l * self.half_width;
        [
            self.center + fx + ly,
            self.center - fx + ly,
            self.center - fx - ly,
            self.center + fx - ly,
        ]
    }

    pub fn edges(&self) -> [(Vec2<T>, Vec2<T>); 4] {
        let c = self.corners();
        [(c[0], c[1]), (c[1], c[2]), (c[2], c[3]), (c[3], c[0])]
    }

    pub fn bounding_radius(&self) -> T {
        self.half_length.hypot(self.half_width)
    }

    /// Radius of the projection of this box onto a unit axis.
    fn projected_radius(&self, axis: Vec2<T>) -> T {
        let [f, l] = self.axes();
        self.half_length * f.dot(axis).abs() + self.half_width * l.dot(axis).abs()
    }

    /// Largest gap between the two boxes over the four candidate separating
    /// axes. Negative when they overlap on every axis.
    pub fn separation(&self, other: &Self) -> T {
        let d = other.center - self.center;
        let [a0, a1] = self.axes();
        let [b0, b1] = other.axes();
        [a0, a1, b0, b1]
            .into_iter()
            .map(|axis| d.dot(axis).abs() - self.projected_radius(axis) - other.projected_radius(axis))
            .fold(T::neg_infinity(), T::max)
    }

    /// Separating-axis overlap test. Boxes whose gap is within `touch_tol`
    /// count as overlapping.
    pub fn overlaps(&self, other: &Self, touch_tol: T) -> bool {
        let reach = self.bounding_radius() + other.bounding_radius() + touch_tol;
        if (other.center - self.center).norm_sq() > reach * reach {
            return false;
        }
        self.separation(other) <= touch_tol
    }

    pub fn contains(&self, p: Vec2<T>) -> bool {
        let [f, l] = self.axes();
        let d = p - self.center;
        d.dot(f).abs() <= self.half_length && d.dot(l).abs() <= self.half_width
    }

    /// Entry distance of a ray into this box (slab method). Returns `Some(0)`
    /// when the origin is already inside.
    pub fn ray_hit(&self, origin: Vec2<T>, dir: Vec2<T>) -> Option<T> {
        let [f, l] = self.axes();
        let rel = origin - self.center;
        let mut t_min = T::zero();
        let mut t_max = T::infinity();
        for (axis, half) in [(f, self.half_length), (l, self.half_width)] {
            let o = rel.dot(axis);
            let d = dir.dot(axis);
            if d.abs() < T::epsilon() {
                if o.abs() > half {
                    return None;
                }
                continue;
            }
            let inv = T::one() / d;
            let mut t0 = (-half - o) * inv;
            let mut t1 = (half - o) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_min = t_min.max(t0);
            t_max = t_max.min(t1);
            if t_min > t_max {
                return None;
            }
        }
        Some(t_min)
    }
}

/// Closest point on segment `[a, b]` to `p`, as (parameter in [0,1], point).
pub fn closest_on_segment<T: Scalar>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> (T, Vec2<T>) {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq <= T::zero() {
        return (T::zero(), a);
    }
    let t = ((p - a).dot(ab) / len_sq).max(T::zero()).min(T::one());
    (t, a + ab * t)
}

pub fn segment_distance<T: Scalar>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> T {
    closest_on_segment(p, a, b).1.distance(p)
}

/// Parameter interval `[t_in, t_out]` (clamped to `t >= 0`) along a ray with
/// unit direction where the ray lies within `radius` of segment `[a, b]`.
pub fn ray_capsule_interval<T: Scalar>(
    origin: Vec2<T>,
    dir: Vec2<T>,
    a: Vec2<T>,
    b: Vec2<T>,
    radius: T,
) -> Option<(T, T)> {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    let mut merge = |iv: Option<(T, T)>| {
        if let Some((t0, t1)) = iv {
            lo = lo.min(t0);
            hi = hi.max(t1);
        }
    };
    merge(ray_disk_interval(origin, dir, a, radius));
    merge(ray_disk_interval(origin, dir, b, radius));
    let ab = b - a;
    if let Some(axis) = ab.normalized() {
        // the swept rectangle part, as a box centred on the segment midpoint
        let mid = a.lerp(b, T::lit(0.5));
        merge(ray_box_interval(origin, dir, mid, axis, ab.norm() * T::lit(0.5), radius));
    }
    if hi < T::zero() || lo > hi {
        return None;
    }
    Some((lo.max(T::zero()), hi))
}

fn ray_disk_interval<T: Scalar>(origin: Vec2<T>, dir: Vec2<T>, c: Vec2<T>, r: T) -> Option<(T, T)> {
    let oc = origin - c;
    let b = oc.dot(dir);
    let cc = oc.norm_sq() - r * r;
    let disc = b * b - cc;
    if disc < T::zero() {
        return None;
    }
    let s = disc.sqrt();
    Some((-b - s, -b + s))
}

fn ray_box_interval<T: Scalar>(
    origin: Vec2<T>,
    dir: Vec2<T>,
    center: Vec2<T>,
    axis: Vec2<T>,
    half_len: T,
    half_w: T,
) -> Option<(T, T)> {
    let rel = origin - center;
    let mut t0 = T::neg_infinity();
    let mut t1 = T::infinity();
    for (ax, half) in [(axis, half_len), (axis.perp(), half_w)] {
        let o = rel.dot(ax);
        let d = dir.dot(ax);
        if d.abs() < T::epsilon() {
            if o.abs() > half {
                return None;
            }
            continue;
        }
        let mut a = (-half - o) / d;
        let mut b = (half - o) / d;
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        t0 = t0.max(a);
        t1 = t1.min(b);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Result of projecting a point onto a polyline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection<T> {
    /// Arc length of the foot point.
    pub s: T,
    /// Signed offset, positive to the left of the direction of travel.
    pub lateral: T,
    /// Unsigned distance to the foot point.
    pub distance: T,
    pub segment: usize,
}

/// Open polyline with cached cumulative arc length.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline<T> {
    points: Vec<Vec2<T>>,
    cumulative: Vec<T>,
}

impl<T: Scalar> Polyline<T> {
    /// Fails with the offending segment index if fewer than two points are
    /// given or a segment has zero length.
    pub fn new(points: Vec<Vec2<T>>) -> Result<Self, usize> {
        if points.len() < 2 {
            return Err(0);
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(T::zero());
        for (i, w) in points.windows(2).enumerate() {
            let len = w[0].distance(w[1]);
            if !(len > T::zero()) || !w[1].is_finite() {
                return Err(i);
            }
            let prev = *cumulative.last().expect("non-empty");
            cumulative.push(prev + len);
        }
        Ok(Self { points, cumulative })
    }

    pub fn points(&self) -> &[Vec2<T>] {
        &self.points
    }

    pub fn length(&self) -> T {
        *self.cumulative.last().expect("polyline has points")
    }

    pub fn segments(&self) -> impl Iterator<Item = (Vec2<T>, Vec2<T>)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    fn segment_at(&self, s: T) -> usize {
        let last = self.points.len() - 2;
        match self.cumulative.binary_search_by(|c| c.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(last),
            Err(i) => i.saturating_sub(1).min(last),
        }
    }

    /// Point at arc length `s` (clamped to the polyline) and its tangent heading.
    pub fn sample(&self, s: T) -> (Vec2<T>, T) {
        let s = s.max(T::zero()).min(self.length());
        let i = self.segment_at(s);
        let a = self.points[i];
        let b = self.points[i + 1];
        let seg_len = self.cumulative[i + 1] - self.cumulative[i];
        let t = ((s - self.cumulative[i]) / seg_len).max(T::zero()).min(T::one());
        (a.lerp(b, t), (b - a).angle())
    }

    pub fn project(&self, p: Vec2<T>) -> Projection<T> {
        let mut best: Option<Projection<T>> = None;
        for (i, (a, b)) in self.segments().enumerate() {
            let (t, foot) = closest_on_segment(p, a, b);
            let dist = foot.distance(p);
            if best.map_or(true, |bp| dist < bp.distance) {
                let dir = b - a;
                let side = dir.cross(p - foot);
                let lateral = if side < T::zero() { -dist } else { dist };
                let s = self.cumulative[i] + (self.cumulative[i + 1] - self.cumulative[i]) * t;
                best = Some(Projection { s, lateral, distance: dist, segment: i });
            }
        }
        best.expect("polyline has at least one segment")
    }
}
