//! Obstructed visibility for unit-disk robots whose sight lines start on a
//! concentric camera disk of radius `c < 1`.
//!
//! Two independent oracles live here. The analytic one trims the near arc
//! of the target body by the shadows cast by the obstructions; the sampled
//! one searches directly for a clear segment between the two boundaries.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    angle_gap, clip_arc_by_region, direct_tangents, segment_point_distance, transverse_tangents,
    ArcSet, BadRegion, Disk, HalfPlane, Line, Point, RegionKind, TangentLine, EPS_GEOM,
};
use crate::protocol::{Color, Robot};

/// A target is visible when more than this much of its arc survives.
pub const EPS_ARC: f64 = 1e-9;

pub const BODY_RADIUS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Error)]
pub enum VisibilityError {
    #[error("camera radius {0} must lie strictly between 0 and 1")]
    InvalidCameraRadius(f64),
    #[error("camera and target body overlap")]
    TooClose,
    #[error("at least 8 samples per boundary are required, got {0}")]
    TooFewSamples(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityModel {
    pub body_radius: f64,
    pub camera_radius: f64,
}

impl VisibilityModel {
    pub fn new(camera_radius: f64) -> Result<Self, VisibilityError> {
        if !(camera_radius > 0.0 && camera_radius < BODY_RADIUS) {
            return Err(VisibilityError::InvalidCameraRadius(camera_radius));
        }
        Ok(VisibilityModel {
            body_radius: BODY_RADIUS,
            camera_radius,
        })
    }

    pub fn camera(&self, center: Point) -> Disk {
        Disk::new(center, self.camera_radius)
    }

    pub fn body(&self, center: Point) -> Disk {
        Disk::new(center, self.body_radius)
    }
}

/// The part of the target boundary that the camera could possibly see,
/// with the two direct tangents bounding it. `left` and `right` are taken
/// looking from the camera towards the target.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateArc {
    pub arc: ArcSet,
    pub left: TangentLine,
    pub right: TangentLine,
}

pub fn candidate_arc(camera: &Disk, target: &Disk) -> Result<CandidateArc, VisibilityError> {
    let axis = target.center - camera.center;
    if axis.norm() <= camera.radius + target.radius {
        return Err(VisibilityError::TooClose);
    }
    let (first, second) = direct_tangents(camera, target).map_err(|_| VisibilityError::TooClose)?;
    // `first` has both disks on its right, so it runs along the left flank.
    let (left, right) = (first, second);
    let facing = (camera.center - target.center).angle();
    let half = angle_gap((left.touch_b - target.center).angle(), facing);
    Ok(CandidateArc {
        arc: ArcSet::centered(*target, facing, half),
        left,
        right,
    })
}

/// Indices (into `others`) of the bodies meeting the left and right
/// tangent segments of the candidate corridor.
pub fn obstruction_sets(cand: &CandidateArc, others: &[Disk]) -> (Vec<usize>, Vec<usize>) {
    let hits = |t: &TangentLine| -> Vec<usize> {
        others
            .iter()
            .enumerate()
            .filter(|(_, d)| segment_point_distance(t.touch_a, t.touch_b, d.center) <= d.radius)
            .map(|(i, _)| i)
            .collect()
    };
    (hits(&cand.left), hits(&cand.right))
}

/// Shadow of a single body: inside both direct tangents from the camera,
/// beyond the chord through the body's tangent points.
pub fn type_one_region(camera: &Disk, body: &Disk) -> Option<BadRegion> {
    let (t1, t2) = direct_tangents(camera, body).ok()?;
    let chord = Line::through(t1.touch_b, t2.touch_b);
    Some(BadRegion::new(
        RegionKind::TypeI,
        vec![
            HalfPlane::containing(t1.line, body.center),
            HalfPlane::containing(t2.line, body.center),
            HalfPlane::opposite(chord, camera.center),
        ],
    ))
}

/// Joint shadow of a left and a right obstruction: the far halves of the
/// two lobes between their transverse tangents that contain the bodies,
/// each cut off behind the chord through that body's tangent points (the
/// part of a lobe in front of its body is open gap). Touching bodies leave
/// no gap, so the whole far half-plane is shadowed.
pub fn type_two_regions(camera: &Disk, left: &Disk, right: &Disk) -> Vec<BadRegion> {
    let centre_line = Line::through(left.center, right.center);
    let far = HalfPlane::opposite(centre_line, camera.center);
    match transverse_tangents(left, right) {
        Ok((s1, s2)) if left.center.dist(right.center) > left.radius + right.radius + EPS_GEOM => [
            (left.center, Line::through(s1.touch_a, s2.touch_a)),
            (right.center, Line::through(s1.touch_b, s2.touch_b)),
        ]
        .into_iter()
        .map(|(c, chord)| {
            BadRegion::new(
                RegionKind::TypeII,
                vec![
                    HalfPlane::containing(s1.line, c),
                    HalfPlane::containing(s2.line, c),
                    HalfPlane::containing(chord, c),
                    far,
                ],
            )
        })
        .collect(),
        _ => vec![BadRegion::new(RegionKind::TypeII, vec![far])],
    }
}

fn potential_obstacles(centers: &[Point], observer: usize, target: usize) -> Vec<Disk> {
    let (o, t) = (centers[observer], centers[target]);
    // Every sight line lies within distance 1 of the centre segment, so a
    // body further than 2 from it cannot interfere.
    centers
        .iter()
        .enumerate()
        .filter(|&(k, &m)| {
            k != observer && k != target && segment_point_distance(o, t, m) <= 2.0 + EPS_GEOM
        })
        .map(|(_, &m)| Disk::new(m, BODY_RADIUS))
        .collect()
}

/// What remains of the candidate arc after every shadow has been removed.
pub fn surviving_arc(
    observer: usize,
    target: usize,
    centers: &[Point],
    model: &VisibilityModel,
) -> ArcSet {
    let camera = model.camera(centers[observer]);
    let body = model.body(centers[target]);
    let Ok(cand) = candidate_arc(&camera, &body) else {
        return ArcSet::empty(body);
    };
    let others = potential_obstacles(centers, observer, target);
    let (l, r) = obstruction_sets(&cand, &others);
    if l.iter().any(|i| r.contains(i)) {
        return ArcSet::empty(body);
    }
    let mut arc = cand.arc;
    let mut seen: Vec<usize> = l.clone();
    seen.extend(r.iter().copied());
    for &k in &seen {
        if arc.is_empty() {
            return arc;
        }
        if let Some(reg) = type_one_region(&camera, &others[k]) {
            arc = clip_arc_by_region(&arc, &reg);
        }
    }
    for &i in &l {
        for &j in &r {
            for reg in type_two_regions(&camera, &others[i], &others[j]) {
                if arc.is_empty() {
                    return arc;
                }
                arc = clip_arc_by_region(&arc, &reg);
            }
        }
    }
    arc
}

pub fn is_visible_analytic(
    observer: usize,
    target: usize,
    centers: &[Point],
    model: &VisibilityModel,
) -> bool {
    surviving_arc(observer, target, centers, model).measure() > EPS_ARC
}

/// Brute-force search over segment endpoints on the two boundaries.
struct Probe {
    o: Point,
    t: Point,
    c: f64,
    obstacles: Vec<Point>,
}

impl Probe {
    /// Positive exactly when the segment from camera angle `a` to target
    /// angle `b` leaves the camera outward, reaches the target from
    /// outside, and clears every other body, each with margin `EPS_GEOM`.
    fn clearance(&self, a: f64, b: f64) -> f64 {
        let ua = Point::from_polar(1.0, a);
        let ub = Point::from_polar(1.0, b);
        let p = self.o + ua * self.c;
        let q = self.t + ub;
        let dir = q - p;
        let len = dir.norm();
        if len < EPS_GEOM {
            return f64::NEG_INFINITY;
        }
        let mut f = (dir.dot(ua) / len).min(-dir.dot(ub) / len) - EPS_GEOM;
        for &m in &self.obstacles {
            f = f.min(segment_point_distance(p, q, m) - BODY_RADIUS - EPS_GEOM);
        }
        f
    }
}

/// Sampled visibility test. Coarse jittered grids over the facing halves
/// of both boundaries are followed by local refinement around the most
/// promising cells, so narrow windows are found without false positives.
pub fn is_visible_sampled(
    observer: usize,
    target: usize,
    centers: &[Point],
    model: &VisibilityModel,
    samples_per_boundary: usize,
    seed: u64,
) -> Result<bool, VisibilityError> {
    if samples_per_boundary < 8 {
        return Err(VisibilityError::TooFewSamples(samples_per_boundary));
    }
    let (o, t) = (centers[observer], centers[target]);
    let probe = Probe {
        o,
        t,
        c: model.camera_radius,
        obstacles: potential_obstacles(centers, observer, target)
            .into_iter()
            .map(|d| d.center)
            .collect(),
    };
    let pair_seed =
        seed ^ ((observer as u64) << 32 | target as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
    let width = FRAC_PI_2 + 0.25;
    let n = samples_per_boundary;
    let step = 2.0 * width / n as f64;
    let (ja, jb): (f64, f64) = (rng.gen(), rng.gen());
    let base_a = (t - o).angle() - width;
    let base_b = (o - t).angle() - width;

    const KEEP: usize = 24;
    const COLUMNS: usize = 6;
    const HOPELESS: f64 = 0.1;
    let mut best: Vec<(f64, f64, f64)> = Vec::with_capacity(KEEP + 1);
    let mut column_best = vec![(f64::NEG_INFINITY, 0.0); n];
    // Visit cells from the centre outwards: the centre line is the most
    // likely clear segment.
    let order: Vec<usize> = (0..n)
        .map(|k| {
            if k % 2 == 0 {
                n / 2 + k / 2
            } else {
                n / 2 - 1 - k / 2
            }
        })
        .collect();
    for &i in &order {
        let a = base_a + (i as f64 + ja) * step;
        for &j in &order {
            let b = base_b + (j as f64 + jb) * step;
            let f = probe.clearance(a, b);
            if f > 0.0 {
                return Ok(true);
            }
            if f > column_best[j].0 {
                column_best[j] = (f, a);
            }
            if best.len() < KEEP || f > best[best.len() - 1].0 {
                let pos = best.partition_point(|e| e.0 >= f);
                best.insert(pos, (f, a, b));
                best.truncate(KEEP);
            }
        }
    }
    for &(f0, a0, b0) in &best {
        if f0 == f64::NEG_INFINITY {
            break;
        }
        if climb(&probe, a0, b0, f0, step) {
            return Ok(true);
        }
    }
    // Narrow windows often run diagonally in the (a, b) plane, where a
    // coordinate search stalls; optimise the camera angle for each target
    // angle instead, around the best coarse columns.
    let mut columns: Vec<(f64, f64, f64)> = column_best
        .iter()
        .enumerate()
        .map(|(j, &(f, a))| (f, a, base_b + (j as f64 + jb) * step))
        .collect();
    columns.sort_by(|x, y| y.0.total_cmp(&x.0));
    for &(f0, a0, b0) in columns.iter().take(COLUMNS) {
        // A coarse column this far from clear cannot hide a window.
        if f0 < -HOPELESS {
            break;
        }
        let inner = |b: f64| maximise(|a| probe.clearance(a, b), a0, 4.0 * step);
        let (_, fb) = maximise(|b| inner(b).1, b0, 2.0 * step);
        if fb > 0.0 {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Coordinate pattern search from a coarse cell; `true` once a clear
/// segment is found.
fn climb(probe: &Probe, a0: f64, b0: f64, f0: f64, step: f64) -> bool {
    let (mut a, mut b, mut f) = (a0, b0, f0);
    let mut s = step;
    while s > 1e-14 {
        let (mut na, mut nb, mut nf) = (a, b, f);
        for di in -2..=2 {
            for dj in -2..=2 {
                let (ca, cb) = (a + di as f64 * s * 0.5, b + dj as f64 * s * 0.5);
                let cf = probe.clearance(ca, cb);
                if cf > nf {
                    (na, nb, nf) = (ca, cb, cf);
                }
            }
        }
        if nf > 0.0 {
            return true;
        }
        if (na, nb) == (a, b) {
            s *= 0.5;
        }
        (a, b, f) = (na, nb, nf);
    }
    false
}

/// Shrinking-window grid maximisation of `g` around `x0`; stops early
/// once a positive value is seen.
fn maximise(g: impl Fn(f64) -> f64, x0: f64, half: f64) -> (f64, f64) {
    const POINTS: i32 = 7;
    let (mut x, mut best) = (x0, g(x0));
    let mut h = half;
    while h > 1e-11 && best <= 0.0 {
        let centre = x;
        for k in -POINTS / 2..=POINTS / 2 {
            let cx = centre + h * k as f64 / (POINTS / 2) as f64;
            let v = g(cx);
            if v > best {
                (x, best) = (cx, v);
            }
        }
        h /= 3.0;
    }
    (x, best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub position: Point,
    pub color: Color,
}

/// Snapshot taken in the Look phase: the robots the observer can see, in
/// global coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub observer: usize,
    pub entries: Vec<ViewEntry>,
}

pub fn view_of(observer: usize, robots: &[Robot], model: &VisibilityModel) -> View {
    let centers: Vec<Point> = robots.iter().map(|r| r.position).collect();
    let entries = (0..robots.len())
        .filter(|&j| j != observer && is_visible_analytic(observer, j, &centers, model))
        .map(|j| ViewEntry {
            position: robots[j].position,
            color: robots[j].color,
        })
        .collect();
    View { observer, entries }
}

/// Row-major matrix of analytic visibility, `m[i * n + j]` for `i` seeing `j`.
pub fn visibility_matrix(centers: &[Point], model: &VisibilityModel) -> Vec<bool> {
    let n = centers.len();
    let mut m = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m[i * n + j] = is_visible_analytic(i, j, centers, model);
            }
        }
    }
    m
}

/// `true` when every robot sees every other robot.
pub fn all_mutually_visible(centers: &[Point], model: &VisibilityModel) -> bool {
    let n = centers.len();
    (0..n).all(|i| (0..n).all(|j| i == j || is_visible_analytic(i, j, centers, model)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{angle_gap, Disk};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pt(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn model(c: f64) -> VisibilityModel {
        VisibilityModel::new(c).unwrap()
    }

    fn triple(d: f64, theta: f64) -> Vec<Point> {
        let p2 = pt(d, 0.0);
        vec![pt(0.0, 0.0), p2, p2 + Point::from_polar(d, theta)]
    }

    #[test]
    fn camera_radius_must_be_slim() {
        assert!(VisibilityModel::new(1.0).is_err());
        assert!(VisibilityModel::new(0.0).is_err());
        assert!(VisibilityModel::new(0.3).is_ok());
    }

    #[test]
    fn candidate_arc_faces_the_observer() {
        let cand =
            candidate_arc(&Disk::new(pt(0.0, 0.0), 0.5), &Disk::new(pt(4.0, 0.0), 1.0)).unwrap();
        let m = cand.arc.measure();
        // Half-width from the right triangle formed by the radius
        // difference and the centre distance.
        assert!((m - 2.0 * (0.5f64 / 4.0).acos()).abs() < 1e-9);
        assert!(m < PI);
        assert!(cand.arc.contains_angle(PI));
        assert!(!cand.arc.contains_angle(0.0));
        // Left flank is on the left when looking from (0,0) towards (4,0).
        assert!(cand.left.touch_b.y > 0.0 && cand.right.touch_b.y < 0.0);
    }

    #[test]
    fn tiny_camera_approaches_point_tangents() {
        let cand = candidate_arc(
            &Disk::new(pt(0.0, 0.0), 1e-9),
            &Disk::new(pt(4.0, 0.0), 1.0),
        )
        .unwrap();
        // From a point at distance 4 the tangent touch points subtend
        // 2·acos(1/4) = π − 2·asin(1/4) around the target centre.
        let expected = PI - 2.0 * (0.25f64).asin();
        assert!((cand.arc.measure() - expected).abs() < 1e-6);
    }

    #[test]
    fn distant_target_arc_tends_to_half_circle() {
        let cand =
            candidate_arc(&Disk::new(pt(0.0, 0.0), 0.5), &Disk::new(pt(1e6, 0.0), 1.0)).unwrap();
        assert!((cand.arc.measure() - PI).abs() < 1e-5);
    }

    #[test]
    fn overlapping_camera_and_target_is_rejected() {
        let r = candidate_arc(&Disk::new(pt(0.0, 0.0), 0.5), &Disk::new(pt(1.2, 0.0), 1.0));
        assert_eq!(r, Err(VisibilityError::TooClose));
    }

    #[test]
    fn obstruction_sets_classify_flanks() {
        let cam = Disk::new(pt(0.0, 0.0), 0.5);
        let cand = candidate_arc(&cam, &Disk::new(pt(10.0, 0.0), 1.0)).unwrap();
        assert_eq!(obstruction_sets(&cand, &[]), (vec![], vec![]));
        let on_left = Disk::new((cand.left.touch_a + cand.left.touch_b) * 0.5, 1.0);
        assert_eq!(obstruction_sets(&cand, &[on_left]), (vec![0], vec![]));
        // The corridor is narrower than 2 near the camera, so a body on the
        // axis there meets both flanks.
        let spanning = Disk::new(pt(3.0, 0.0), 1.0);
        assert_eq!(obstruction_sets(&cand, &[spanning]), (vec![0], vec![0]));
        let pts = vec![pt(0.0, 0.0), pt(10.0, 0.0), pt(3.0, 0.0)];
        assert!(!is_visible_analytic(0, 1, &pts, &model(0.5)));
    }

    #[test]
    fn collinear_triple_hides_the_far_robot() {
        let pts = vec![pt(0.0, 0.0), pt(4.0, 0.0), pt(8.0, 0.0)];
        let m = model(0.5);
        assert!(!is_visible_analytic(0, 2, &pts, &m));
        assert!(!is_visible_sampled(0, 2, &pts, &m, 10_000, 3).unwrap());
        assert!(is_visible_analytic(0, 1, &pts, &m));
        let robots: Vec<Robot> = pts.iter().map(|&p| Robot::new(p, Color::Off)).collect();
        let v = view_of(0, &robots, &m);
        assert_eq!(v.entries.len(), 1);
        assert_eq!(v.entries[0].position, pt(4.0, 0.0));
    }

    #[test]
    fn chain_triple_threshold() {
        let m = model(0.5);
        for (theta, visible) in [(0.3, true), (0.2, false)] {
            let pts = triple(2.0, theta);
            assert_eq!(
                is_visible_analytic(0, 2, &pts, &m),
                visible,
                "theta {theta}"
            );
            assert_eq!(
                is_visible_analytic(2, 0, &pts, &m),
                visible,
                "theta {theta}"
            );
            assert_eq!(is_visible_sampled(0, 2, &pts, &m, 512, 9).unwrap(), visible);
        }
    }

    #[test]
    fn asymmetric_visibility_fixture() {
        // Found by randomised search over three-robot configurations with
        // c = 0.9: robot 1 sees robot 0, robot 0 does not see robot 1.
        let pts = vec![
            pt(0.0, 0.0),
            pt(6.357768420369967, -2.1425693309628886),
            pt(2.4052284647357105, -0.8660714037730401),
        ];
        let m = model(0.9);
        assert!(is_visible_analytic(1, 0, &pts, &m));
        assert!(!is_visible_analytic(0, 1, &pts, &m));
        assert!(is_visible_sampled(1, 0, &pts, &m, 256, 1).unwrap());
        assert!(!is_visible_sampled(0, 1, &pts, &m, 256, 1).unwrap());
    }

    #[test]
    fn sampler_rejects_too_few_samples() {
        let pts = vec![pt(0.0, 0.0), pt(4.0, 0.0)];
        assert_eq!(
            is_visible_sampled(0, 1, &pts, &model(0.5), 7, 0),
            Err(VisibilityError::TooFewSamples(7))
        );
    }

    #[test]
    fn views_of_tiny_configurations() {
        let m = model(0.5);
        let one = vec![Robot::new(pt(0.0, 0.0), Color::Off)];
        assert!(view_of(0, &one, &m).entries.is_empty());
        let two = vec![
            Robot::new(pt(0.0, 0.0), Color::Off),
            Robot::new(pt(2.0, 0.0), Color::Leader),
        ];
        assert_eq!(view_of(0, &two, &m).entries[0].color, Color::Leader);
        assert_eq!(view_of(1, &two, &m).entries[0].color, Color::Off);
    }

    fn arb_config(max_n: usize) -> impl Strategy<Value = (Vec<Point>, f64)> {
        (
            prop::collection::vec((0.0..14.0f64, 0.0..14.0f64), 2..=max_n),
            prop::sample::select(vec![0.25, 0.5, 0.75, 0.9]),
        )
            .prop_map(|(raw, c)| {
                let mut pts: Vec<Point> = Vec::new();
                for (x, y) in raw {
                    let p = pt(x, y);
                    if pts.iter().all(|q| q.dist(p) >= 2.0) {
                        pts.push(p);
                    }
                }
                (pts, c)
            })
    }

    /// Angular interval subtended by a disk seen from `p`: (direction, half-width).
    fn cone(p: Point, d: &Disk) -> (f64, f64) {
        let v = d.center - p;
        (v.angle(), (d.radius / v.norm()).asin())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn two_robots_always_see_each_other(
            x in -30.0..30.0f64, y in -30.0..30.0f64, c in 0.01..0.99f64
        ) {
            let p = pt(x, y);
            prop_assume!(p.norm() >= 2.0);
            let pts = vec![pt(0.0, 0.0), p];
            let m = model(c);
            prop_assert!(is_visible_analytic(0, 1, &pts, &m));
            prop_assert!(is_visible_analytic(1, 0, &pts, &m));
        }

        #[test]
        fn removing_a_robot_never_hides_anyone((pts, c) in arb_config(8)) {
            prop_assume!(pts.len() >= 3);
            let m = model(c);
            let n = pts.len();
            for drop in 0..n {
                let rest: Vec<Point> = pts.iter().enumerate()
                    .filter(|&(k, _)| k != drop).map(|(_, &p)| p).collect();
                let idx = |k: usize| if k < drop { k } else { k - 1 };
                for i in (0..n).filter(|&i| i != drop) {
                    for j in (0..n).filter(|&j| j != drop && j != i) {
                        if is_visible_analytic(i, j, &pts, &m) {
                            prop_assert!(is_visible_analytic(idx(i), idx(j), &rest, &m));
                        }
                    }
                }
            }
        }

        #[test]
        fn shared_obstruction_means_invisible((pts, c) in arb_config(8)) {
            let m = model(c);
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    if i == j { continue; }
                    let cand = candidate_arc(&m.camera(pts[i]), &m.body(pts[j])).unwrap();
                    let others: Vec<Disk> = pts.iter().enumerate()
                        .filter(|&(k, _)| k != i && k != j).map(|(_, &p)| m.body(p)).collect();
                    let (l, r) = obstruction_sets(&cand, &others);
                    if l.iter().any(|k| r.contains(k)) {
                        prop_assert!(!is_visible_analytic(i, j, &pts, &m));
                    }
                }
            }
        }

        #[test]
        fn type_two_region_is_where_the_gap_closes(
            ax in -3.0..3.0f64, ay in -3.0..3.0f64, bx in 2.0..9.0f64, by in -3.0..3.0f64,
            px in -12.0..14.0f64, py in -12.0..12.0f64, cy in 4.0..12.0f64, c in 0.05..0.95f64
        ) {
            let (a, b, p) = (Disk::new(pt(ax, ay), 1.0), Disk::new(pt(bx, by), 1.0), pt(px, py));
            prop_assume!(a.center.dist(b.center) > 2.0 + 1e-6);
            prop_assume!(p.dist(a.center) > 1.0 && p.dist(b.center) > 1.0);
            let cam = Disk::new(pt((ax + bx) / 2.0, cy), c);
            let side = |q: Point| (b.center - a.center).cross(q - a.center);
            prop_assume!(side(cam.center).abs() > cam.radius + 2.0);
            let (ca, ha) = cone(p, &a);
            let (cb, hb) = cone(p, &b);
            let overlap = ha + hb - angle_gap(ca, cb);
            let sp = side(p);
            prop_assume!(overlap.abs() > 1e-7 && sp.abs() > 1e-7);
            let inside = type_two_regions(&cam, &a, &b).iter().any(|g| g.contains(p));
            prop_assert_eq!(inside, overlap > 0.0 && sp * side(cam.center) < 0.0);
        }

        #[test]
        fn shadow_regions_match_tangent_tests((pts, c) in arb_config(7), u in 0.001..0.999f64) {
            let m = model(c);
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    if i == j { continue; }
                    let cam = m.camera(pts[i]);
                    let cand = candidate_arc(&cam, &m.body(pts[j])).unwrap();
                    let others: Vec<Disk> = pts.iter().enumerate()
                        .filter(|&(k, _)| k != i && k != j).map(|(_, &p)| m.body(p)).collect();
                    let (l, r) = obstruction_sets(&cand, &others);
                    let (lo, hi) = cand.arc.intervals[0];
                    let p = cand.arc.circle.point_at(lo + u * (hi - lo));
                    // A single obstruction shadows p exactly when, seen from
                    // p, the camera hides entirely behind it.
                    let (co, ho) = cone(p, &cam);
                    for &k in l.iter().chain(r.iter()) {
                        let reg = type_one_region(&cam, &others[k]).unwrap();
                        let (ck, hk) = cone(p, &others[k]);
                        let margin = hk - (angle_gap(co, ck) + ho);
                        let behind = cam.center.dist(p) > others[k].center.dist(p);
                        if margin.abs() > 1e-7 {
                            prop_assert_eq!(reg.contains(p), margin > 0.0 && behind);
                        }
                    }
                    // A left/right pair shadows p exactly when, seen from p,
                    // the gap between the two bodies is closed.
                    for &a in &l {
                        for &b in &r {
                            if l.contains(&b) || r.contains(&a) { continue; }
                            let regs = type_two_regions(&cam, &others[a], &others[b]);
                            let inside = regs.iter().any(|g| g.contains(p));
                            let (ca, ha) = cone(p, &others[a]);
                            let (cb, hb) = cone(p, &others[b]);
                            let overlap = ha + hb - angle_gap(ca, cb);
                            // Only the side of the centre line away from the
                            // camera counts; the near side is type-I territory.
                            let side = |q: Point| (others[b].center - others[a].center).cross(q - others[a].center);
                            let (sp, sc) = (side(p), side(cam.center));
                            if overlap.abs() > 1e-7 && sp.abs() > 1e-7 {
                                prop_assert_eq!(inside, overlap > 0.0 && sp * sc < 0.0);
                            }
                        }
                    }
                }
            }
        }
    }
}
