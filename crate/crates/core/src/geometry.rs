//! Plane primitives used by the visibility oracle: points, disks, tangent
//! lines between two circles, half-plane regions and sets of arcs.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Residual tolerance for tangency and intersection computations.
pub const EPS_GEOM: f64 = 1e-9;

/// Arcs shorter than this are discarded after clipping.
pub const MIN_ARC: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Point::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise rotation by a right angle.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector in the same direction; the zero vector maps to itself.
    pub fn unit(self) -> Point {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self * (1.0 / n)
        }
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Point, radius: f64) -> Self {
        debug_assert!(radius > 0.0, "disk radius must be positive");
        Disk { center, radius }
    }

    /// Point on the boundary circle at the given angle.
    pub fn point_at(&self, angle: f64) -> Point {
        self.center + Point::from_polar(self.radius, angle)
    }
}

/// Directed line through `point` with unit direction `dir`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub point: Point,
    pub dir: Point,
}

impl Line {
    pub fn new(point: Point, dir: Point) -> Self {
        Line {
            point,
            dir: dir.unit(),
        }
    }

    pub fn through(a: Point, b: Point) -> Self {
        Line::new(a, b - a)
    }

    /// Signed distance: positive on the left of the direction of travel.
    pub fn side(&self, p: Point) -> f64 {
        self.dir.cross(p - self.point)
    }

    pub fn distance(&self, p: Point) -> f64 {
        self.side(p).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentLine {
    pub line: Line,
    pub touch_a: Point,
    pub touch_b: Point,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("disks are concentric")]
    Concentric,
    #[error("one disk contains the other")]
    ContainedDisk,
    #[error("disks overlap, no transverse tangents exist")]
    OverlappingDisks,
}

/// Build the tangent whose unit normal `n` points from the line towards
/// the first disk's center, i.e. `touch = center - r * n`.
fn tangent_from_normal(a: &Disk, b: &Disk, n: Point, sign_b: f64) -> TangentLine {
    let touch_a = a.center - n * a.radius;
    let touch_b = b.center - n * (sign_b * b.radius);
    let mut dir = n.perp();
    if dir.dot(b.center - a.center) < 0.0 {
        dir = -dir;
    }
    TangentLine {
        line: Line::new(touch_a, dir),
        touch_a,
        touch_b,
    }
}

/// The two external tangents of two circles. Each touches both circles on
/// the same side; the first has the disks on its right, the second on its
/// left (direction of travel from `a` towards `b`).
pub fn direct_tangents(a: &Disk, b: &Disk) -> Result<(TangentLine, TangentLine), GeometryError> {
    let delta = b.center - a.center;
    let d = delta.norm();
    if d < EPS_GEOM {
        return Err(GeometryError::Concentric);
    }
    if d < (a.radius - b.radius).abs() - EPS_GEOM {
        return Err(GeometryError::ContainedDisk);
    }
    let v = delta * (1.0 / d);
    let k = ((b.radius - a.radius) / d).clamp(-1.0, 1.0);
    let h = (1.0 - k * k).max(0.0).sqrt();
    // n is the unit normal pointing from the line into the disks.
    let right = tangent_from_normal(a, b, v * k - v.perp() * h, 1.0);
    let left = tangent_from_normal(a, b, v * k + v.perp() * h, 1.0);
    Ok((right, left))
}

/// The two internal tangents of two disjoint circles. They cross on the
/// segment joining the centers, dividing it in the ratio of the radii.
pub fn transverse_tangents(
    a: &Disk,
    b: &Disk,
) -> Result<(TangentLine, TangentLine), GeometryError> {
    let delta = b.center - a.center;
    let d = delta.norm();
    if d <= a.radius + b.radius {
        return Err(GeometryError::OverlappingDisks);
    }
    let v = delta * (1.0 / d);
    let k = -(a.radius + b.radius) / d;
    let h = (1.0 - k * k).max(0.0).sqrt();
    let first = tangent_from_normal(a, b, v * k - v.perp() * h, -1.0);
    let second = tangent_from_normal(a, b, v * k + v.perp() * h, -1.0);
    Ok((first, second))
}

/// Intersection point of two non-parallel lines.
pub fn line_intersection(l1: &Line, l2: &Line) -> Option<Point> {
    let denom = l1.dir.cross(l2.dir);
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = (l2.point - l1.point).cross(l2.dir) / denom;
    Some(l1.point + l1.dir * t)
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn segment_point_distance(a: Point, b: Point, p: Point) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Closed half-plane on one side of a directed line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub line: Line,
    /// `true` keeps the left side of the line, `false` the right side.
    pub left: bool,
}

impl HalfPlane {
    /// The side of `line` that contains `p` (left when `p` is on the line).
    pub fn containing(line: Line, p: Point) -> Self {
        HalfPlane {
            line,
            left: line.side(p) >= 0.0,
        }
    }

    /// The side of `line` that does not contain `p`.
    pub fn opposite(line: Line, p: Point) -> Self {
        HalfPlane {
            line,
            left: line.side(p) < 0.0,
        }
    }

    /// Boundary points count as inside.
    pub fn contains(&self, p: Point) -> bool {
        let s = self.line.side(p);
        if self.left {
            s >= -EPS_GEOM
        } else {
            s <= EPS_GEOM
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionKind {
    TypeI,
    TypeII,
}

/// Convex shadow region: the intersection of a few closed half-planes.
/// Both wedge lines come first; an optional cap closes the wedge on the
/// side facing the observer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadRegion {
    pub kind: RegionKind,
    pub bounds: Vec<HalfPlane>,
}

impl BadRegion {
    pub fn new(kind: RegionKind, bounds: Vec<HalfPlane>) -> Self {
        BadRegion { kind, bounds }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.bounds.iter().all(|h| h.contains(p))
    }
}

/// Normalize an angle into `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Angles in `[0, 2π)` at which the circle meets the line.
pub fn circle_line_angles(circle: &Disk, line: &Line) -> Vec<f64> {
    let w = line.point - circle.center;
    let b = line.dir.dot(w);
    let disc = b * b - (w.norm_sq() - circle.radius * circle.radius);
    if disc < 0.0 {
        return Vec::new();
    }
    let root = disc.sqrt();
    let mut out = Vec::with_capacity(2);
    for t in [-b - root, -b + root] {
        let p = line.point + line.dir * t - circle.center;
        out.push(normalize_angle(p.angle()));
    }
    out
}

/// A union of disjoint half-open angular intervals `[α, β)` on a circle,
/// with `0 ≤ α < β ≤ 2π`, kept sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcSet {
    pub circle: Disk,
    pub intervals: Vec<(f64, f64)>,
}

impl ArcSet {
    pub fn empty(circle: Disk) -> Self {
        ArcSet {
            circle,
            intervals: Vec::new(),
        }
    }

    pub fn full(circle: Disk) -> Self {
        ArcSet {
            circle,
            intervals: vec![(0.0, TAU)],
        }
    }

    /// Arc running counter-clockwise from `start` to `start + length`.
    pub fn from_span(circle: Disk, start: f64, length: f64) -> Self {
        if length >= TAU {
            return ArcSet::full(circle);
        }
        if length < MIN_ARC {
            return ArcSet::empty(circle);
        }
        let a = normalize_angle(start);
        let b = a + length;
        let intervals = if b <= TAU {
            vec![(a, b)]
        } else {
            vec![(0.0, b - TAU), (a, TAU)]
        };
        let mut arc = ArcSet { circle, intervals };
        arc.tidy();
        arc
    }

    /// Arc of half-width `half` centred on direction `mid`.
    pub fn centered(circle: Disk, mid: f64, half: f64) -> Self {
        ArcSet::from_span(circle, mid - half, 2.0 * half)
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains_angle(&self, angle: f64) -> bool {
        let a = normalize_angle(angle);
        self.intervals.iter().any(|&(lo, hi)| lo <= a && a < hi)
    }

    fn tidy(&mut self) {
        self.intervals.retain(|(a, b)| b - a >= MIN_ARC);
        self.intervals
            .sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite angles"));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(self.intervals.len());
        for &(a, b) in &self.intervals {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        self.intervals = merged;
    }
}

/// Remove from `arc` the points lying in `region`.
pub fn clip_arc_by_region(arc: &ArcSet, region: &BadRegion) -> ArcSet {
    if arc.is_empty() {
        return arc.clone();
    }
    let mut cuts: Vec<f64> = region
        .bounds
        .iter()
        .flat_map(|h| circle_line_angles(&arc.circle, &h.line))
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    let mut kept = Vec::new();
    for &(lo, hi) in &arc.intervals {
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(lo);
        edges.extend(cuts.iter().copied().filter(|&c| c > lo && c < hi));
        edges.push(hi);
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < MIN_ARC {
                continue;
            }
            if !region.contains(arc.circle.point_at(0.5 * (a + b))) {
                kept.push((a, b));
            }
        }
    }
    let mut out = ArcSet {
        circle: arc.circle,
        intervals: kept,
    };
    out.tidy();
    out
}

/// Smallest absolute difference between two angles.
pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = normalize_angle(a - b);
    d.min(TAU - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn disk(x: f64, y: f64, r: f64) -> Disk {
        Disk::new(Point::new(x, y), r)
    }

    fn residuals(t: &TangentLine, a: &Disk, b: &Disk) -> [f64; 4] {
        [
            (t.line.distance(a.center) - a.radius).abs(),
            (t.line.distance(b.center) - b.radius).abs(),
            (t.touch_a.dist(a.center) - a.radius).abs(),
            (t.touch_b.dist(b.center) - b.radius).abs(),
        ]
    }

    #[test]
    fn equal_radii_give_horizontal_tangents() {
        let (a, b) = (disk(0.0, 0.0, 1.0), disk(5.0, 0.0, 1.0));
        let (r, l) = direct_tangents(&a, &b).unwrap();
        let mut ys = [r.touch_a.y, l.touch_a.y];
        ys.sort_by(f64::total_cmp);
        assert!((ys[0] + 1.0).abs() < 1e-12 && (ys[1] - 1.0).abs() < 1e-12);
        assert!(r.line.dir.y.abs() < 1e-12 && l.line.dir.y.abs() < 1e-12);
    }

    #[test]
    fn unequal_radii_pass_through_external_homothety_centre() {
        let (a, b) = (disk(0.0, 0.0, 0.5), disk(4.0, 0.0, 1.0));
        // Independent construction: the external centre lies on the axis
        // where the ratio of distances equals the ratio of radii.
        let h = Point::new(-4.0, 0.0);
        let half = (0.5f64 / 4.0).asin();
        let (r, l) = direct_tangents(&a, &b).unwrap();
        for t in [r, l] {
            assert!(t.line.distance(h) < 1e-9);
            assert!((t.line.dir.y.abs().asin() - half).abs() < 1e-9);
            assert!(residuals(&t, &a, &b).iter().all(|&e| e < 1e-9));
        }
    }

    #[test]
    fn degenerate_direct_tangents() {
        let a = disk(0.0, 0.0, 1.0);
        assert_eq!(
            direct_tangents(&a, &disk(0.0, 0.0, 0.5)),
            Err(GeometryError::Concentric)
        );
        assert_eq!(
            direct_tangents(&a, &disk(0.2, 0.0, 0.5)),
            Err(GeometryError::ContainedDisk)
        );
    }

    #[test]
    fn transverse_tangents_cross_at_internal_centre() {
        let (a, b) = (disk(0.0, 0.0, 1.0), disk(4.0, 0.0, 1.0));
        let (s, t) = transverse_tangents(&a, &b).unwrap();
        let x = line_intersection(&s.line, &t.line).unwrap();
        assert!(x.dist(Point::new(2.0, 0.0)) < 1e-9);
        assert!((s.line.dir.y.abs().asin() - PI / 6.0).abs() < 1e-9);

        let (a, b) = (disk(0.0, 0.0, 1.0), disk(0.0, 6.0, 2.0));
        let (s, t) = transverse_tangents(&a, &b).unwrap();
        let x = line_intersection(&s.line, &t.line).unwrap();
        assert!(x.dist(Point::new(0.0, 2.0)) < 1e-9);
        for tl in [s, t] {
            assert!(residuals(&tl, &a, &b).iter().all(|&e| e < 1e-9));
            // Internal tangents separate the two centres.
            assert!(tl.line.side(a.center) * tl.line.side(b.center) < 0.0);
        }
    }

    #[test]
    fn overlapping_disks_have_no_transverse_tangents() {
        let r = transverse_tangents(&disk(0.0, 0.0, 1.0), &disk(1.5, 0.0, 1.0));
        assert_eq!(r, Err(GeometryError::OverlappingDisks));
    }

    #[test]
    fn clipping_full_circle_by_upper_half_plane() {
        let c = disk(0.0, 0.0, 1.0);
        let upper = BadRegion::new(
            RegionKind::TypeI,
            vec![HalfPlane {
                line: Line::new(Point::ORIGIN, Point::new(1.0, 0.0)),
                left: true,
            }],
        );
        let out = clip_arc_by_region(&ArcSet::full(c), &upper);
        assert!((out.measure() - PI).abs() < 1e-12);
        assert!(out.contains_angle(-FRAC_PI_2));
        assert!(!out.contains_angle(FRAC_PI_2));
        assert!(clip_arc_by_region(&ArcSet::empty(c), &upper).is_empty());
    }

    #[test]
    fn clipping_quarter_arc_by_vertical_half_plane() {
        let c = disk(0.0, 0.0, 1.0);
        let arc = ArcSet::from_span(c, 0.0, FRAC_PI_2);
        let x0 = FRAC_PI_4.cos();
        let right = BadRegion::new(
            RegionKind::TypeI,
            vec![HalfPlane {
                line: Line::new(Point::new(x0, 0.0), Point::new(0.0, 1.0)),
                left: false,
            }],
        );
        let out = clip_arc_by_region(&arc, &right);
        assert_eq!(out.intervals.len(), 1);
        let (lo, hi) = out.intervals[0];
        assert!((lo - FRAC_PI_4).abs() < 1e-9 && (hi - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn wrapping_spans_split_at_zero() {
        let arc = ArcSet::from_span(disk(0.0, 0.0, 1.0), -0.5, 1.0);
        assert_eq!(arc.intervals.len(), 2);
        assert!((arc.measure() - 1.0).abs() < 1e-12);
        assert!(arc.contains_angle(0.0) && arc.contains_angle(-0.25));
    }

    #[test]
    fn segment_distances() {
        let (a, b) = (Point::ORIGIN, Point::new(4.0, 0.0));
        assert_eq!(segment_point_distance(a, b, Point::new(2.0, 3.0)), 3.0);
        assert_eq!(segment_point_distance(a, b, Point::new(6.0, 0.0)), 2.0);
        assert_eq!(segment_point_distance(a, a, Point::new(3.0, 4.0)), 5.0);
    }

    fn arb_disk(max_r: f64) -> impl Strategy<Value = Disk> {
        (-20.0..20.0f64, -20.0..20.0f64, 0.05..max_r).prop_map(|(x, y, r)| disk(x, y, r))
    }

    fn arb_region() -> impl Strategy<Value = BadRegion> {
        prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, 0.0..TAU, any::<bool>()), 1..4).prop_map(
            |hs| {
                let bounds = hs
                    .into_iter()
                    .map(|(x, y, a, left)| HalfPlane {
                        line: Line::new(Point::new(x, y), Point::from_polar(1.0, a)),
                        left,
                    })
                    .collect();
                BadRegion::new(RegionKind::TypeII, bounds)
            },
        )
    }

    proptest! {
        #[test]
        fn tangent_residuals_are_tiny(a in arb_disk(3.0), b in arb_disk(3.0)) {
            let d = a.center.dist(b.center);
            if d > (a.radius - b.radius).abs() + 1e-6 {
                let (r, l) = direct_tangents(&a, &b).unwrap();
                for t in [r, l] {
                    prop_assert!(residuals(&t, &a, &b).iter().all(|&e| e < 1e-9));
                    prop_assert!(t.line.side(a.center) * t.line.side(b.center) > 0.0);
                }
            }
            if d > a.radius + b.radius + 1e-6 {
                let (s, t) = transverse_tangents(&a, &b).unwrap();
                for tl in [s, t] {
                    prop_assert!(residuals(&tl, &a, &b).iter().all(|&e| e < 1e-9));
                }
            }
        }

        #[test]
        fn clipping_only_removes(
            start in 0.0..TAU, len in 0.0..TAU, reg in arb_region()
        ) {
            let arc = ArcSet::from_span(disk(0.5, -0.5, 2.0), start, len);
            let out = clip_arc_by_region(&arc, &reg);
            prop_assert!(out.measure() <= arc.measure() + 1e-12);
            for &(lo, hi) in &out.intervals {
                let mid = 0.5 * (lo + hi);
                prop_assert!(arc.contains_angle(mid));
                prop_assert!(!reg.contains(out.circle.point_at(mid)));
            }
        }

        #[test]
        fn clipping_order_does_not_matter(
            start in 0.0..TAU, len in 0.0..TAU, r1 in arb_region(), r2 in arb_region()
        ) {
            let arc = ArcSet::from_span(disk(0.0, 0.0, 1.5), start, len);
            let ab = clip_arc_by_region(&clip_arc_by_region(&arc, &r1), &r2);
            let ba = clip_arc_by_region(&clip_arc_by_region(&arc, &r2), &r1);
            prop_assert!((ab.measure() - ba.measure()).abs() < 1e-9);
        }

        #[test]
        fn zero_distance_iff_on_segment(
            ax in -5.0..5.0f64, ay in -5.0..5.0f64, bx in -5.0..5.0f64, by in -5.0..5.0f64,
            t in 0.0..1.0f64, off in -2.0..2.0f64
        ) {
            let (a, b) = (Point::new(ax, ay), Point::new(bx, by));
            let on = a + (b - a) * t;
            prop_assert!(segment_point_distance(a, b, on) < 1e-9);
            let n = (b - a).perp().unit();
            if n.norm() > 0.5 && off.abs() > 1e-6 {
                let p = on + n * off;
                prop_assert!(segment_point_distance(a, b, p) > 1e-9);
            }
        }
    }
}
