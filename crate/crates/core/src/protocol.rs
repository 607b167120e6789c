//! The Compute phase: a pure map from a robot's own light, position and
//! view to a destination and a new light.
//!
//! Stage 1 elects a leader by moving southward; stage 2 builds a base chain
//! on the leader's horizontal line, expanding it when a branch is full, and
//! finally lifts every base robot onto its vertex of the visibility chain.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chain::spec_from_sigma;
use crate::geometry::{segment_point_distance, Point};
use crate::visibility::View;

/// Tolerance for line membership and alignment tests.
pub const EPS_POS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Off,
    Defeated,
    Leader,
    Subordinate,
    NoSpace,
    Expand,
    Final,
}

impl Color {
    pub const ALL: [Color; 7] = [
        Color::Off,
        Color::Defeated,
        Color::Leader,
        Color::Subordinate,
        Color::NoSpace,
        Color::Expand,
        Color::Final,
    ];

    /// Colors that only appear once a leader exists.
    pub fn is_stage_two(self) -> bool {
        !matches!(self, Color::Off | Color::Defeated)
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Off => "off",
            Color::Defeated => "defeated",
            Color::Leader => "leader",
            Color::Subordinate => "subordinate",
            Color::NoSpace => "no_space",
            Color::Expand => "expand",
            Color::Final => "final",
        }
    }

    /// Whether a robot may switch from `self` to `next` in one cycle.
    pub fn may_become(self, next: Color) -> bool {
        use Color::*;
        self == next
            || matches!(
                (self, next),
                (Off, Defeated | Subordinate | Leader)
                    | (Defeated, Subordinate)
                    | (Subordinate, NoSpace | Final)
                    | (NoSpace, Subordinate)
                    | (Leader, Expand | Final)
                    | (Expand, Leader)
            )
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub position: Point,
    pub color: Color,
}

impl Robot {
    pub fn new(position: Point, color: Color) -> Self {
        Robot { position, color }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Known bound on the initial horizontal width; `None` selects the
    /// practical mode with the minimal separation of 10.
    pub width_bound: Option<f64>,
    pub camera_radius: f64,
    pub separation_threshold: f64,
}

impl ProtocolParams {
    pub fn new(width_bound: f64, camera_radius: f64) -> Self {
        ProtocolParams {
            width_bound: Some(width_bound),
            camera_radius,
            separation_threshold: (width_bound / 3f64.sqrt()).max(10.0),
        }
    }

    pub fn practical(camera_radius: f64) -> Self {
        ProtocolParams {
            width_bound: None,
            camera_radius,
            separation_threshold: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub destination: Point,
    pub color: Color,
}

impl Decision {
    pub fn stay(at: Point, color: Color) -> Self {
        Decision {
            destination: at,
            color,
        }
    }

    pub fn go(to: Point, color: Color) -> Self {
        Decision {
            destination: to,
            color,
        }
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= EPS_POS
}

/// `true` iff every visible robot is at least `1 - c` to the north.
pub fn sure_southmost(view: &View, me: Point, c: f64) -> bool {
    view.entries
        .iter()
        .all(|e| e.position.y - me.y >= (1.0 - c) - 1e-12)
}

pub fn decide_off(me: Point, view: &View, params: &ProtocolParams) -> Decision {
    let es = &view.entries;
    if es.iter().any(|e| e.color.is_stage_two()) {
        return Decision::stay(me, Color::Subordinate);
    }
    let south = es.iter().any(|e| e.position.y < me.y - EPS_POS);
    let east_on_line = es
        .iter()
        .any(|e| near(e.position.y, me.y) && e.position.x > me.x);
    if south || east_on_line {
        return Decision::stay(me, Color::Defeated);
    }
    if sure_southmost(view, me, params.camera_radius) {
        let gap = es
            .iter()
            .map(|e| e.position.y - me.y)
            .fold(f64::INFINITY, f64::min);
        // The drop below lands on the threshold only up to rounding.
        if gap >= params.separation_threshold - EPS_POS {
            return Decision::stay(me, Color::Leader);
        }
        let drop = params.separation_threshold - gap;
        return Decision::go(me + Point::new(0.0, -drop), Color::Off);
    }
    Decision::go(me + Point::new(0.0, -2.0), Color::Off)
}

pub fn decide_defeated(me: Point, view: &View) -> Decision {
    if view.entries.iter().any(|e| e.color.is_stage_two()) {
        Decision::stay(me, Color::Subordinate)
    } else {
        Decision::stay(me, Color::Defeated)
    }
}

/// The coordinate frame centred on the visible leader.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFrame {
    pub origin: Point,
    pub leader_color: Color,
}

impl LocalFrame {
    pub fn from_view(view: &View) -> Option<Self> {
        view.entries
            .iter()
            .find(|e| matches!(e.color, Color::Leader | Color::Expand))
            .map(|e| LocalFrame {
                origin: e.position,
                leader_color: e.color,
            })
    }

    pub fn rel(&self, p: Point) -> Point {
        p - self.origin
    }

    pub fn abs(&self, x: f64, y: f64) -> Point {
        self.origin + Point::new(x, y)
    }
}

/// A visible robot in frame coordinates.
#[derive(Clone, Copy, Debug)]
struct Seen {
    p: Point,
    color: Color,
}

fn seen_in(frame: &LocalFrame, view: &View) -> Vec<Seen> {
    view.entries
        .iter()
        .map(|e| Seen {
            p: frame.rel(e.position),
            color: e.color,
        })
        .collect()
}

pub fn decide_leader(me: &Robot, view: &View) -> Decision {
    let es = &view.entries;
    match me.color {
        Color::Leader => {
            // Robots still queued on L4 mean the last expansion is only
            // now being released; the `no_space` light is stale.
            let queued = es.iter().any(|e| near(e.position.y - me.position.y, 4.0));
            if !queued && es.iter().any(|e| e.color == Color::NoSpace) {
                return Decision::stay(me.position, Color::Expand);
            }
            let west: Vec<_> = es
                .iter()
                .filter(|e| e.position.x < me.position.x - EPS_POS)
                .collect();
            let done = !west.is_empty()
                && west.iter().all(|e| e.color == Color::Final)
                && !west.iter().any(|e| near(e.position.y, me.position.y));
            if done {
                Decision::stay(me.position, Color::Final)
            } else {
                Decision::stay(me.position, Color::Leader)
            }
        }
        Color::Expand => {
            let low = es
                .iter()
                .any(|e| e.position.y - me.position.y < 4.0 - EPS_POS);
            let queued = es.iter().any(|e| near(e.position.y - me.position.y, 4.0));
            if !low && queued {
                Decision::stay(me.position, Color::Leader)
            } else {
                Decision::stay(me.position, Color::Expand)
            }
        }
        other => Decision::stay(me.position, other),
    }
}

pub fn decide_no_space(me: Point, view: &View) -> Decision {
    let ready = LocalFrame::from_view(view).is_some_and(|f| {
        f.leader_color == Color::Leader
            && view.entries.iter().any(|e| near(f.rel(e.position).y, 4.0))
    });
    if ready {
        Decision::stay(me, Color::Subordinate)
    } else {
        Decision::stay(me, Color::NoSpace)
    }
}

/// Where a robot entering the base from the axis goes: `Ok(x)` for the
/// slot abscissa, `Err(())` when the chosen branch is full.
fn insertion_slot(seen: &[Seen]) -> Result<f64, ()> {
    let base: Vec<f64> = seen
        .iter()
        .filter(|s| near(s.p.y, 0.0) && s.p.x.abs() > EPS_POS)
        .map(|s| s.p.x)
        .collect();
    let east = base.iter().filter(|&&x| x > 0.0).count();
    let west = base.len() - east;
    let (sign, m) = if east <= west {
        (1.0, east)
    } else {
        (-1.0, west)
    };
    if m == 0 {
        return Ok(sign * 4.0);
    }
    let sigma = base.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    let spec = spec_from_sigma(sigma).map_err(|_| ())?;
    if !spec.branch_has_space(m) {
        return Err(());
    }
    spec.offset(m + 1).map(|b| sign * b).ok_or(())
}

/// Destination of the last robot: the next free vertex of the west branch.
fn last_robot_target(seen: &[Seen]) -> Option<Point> {
    let base: Vec<f64> = seen
        .iter()
        .filter(|s| near(s.p.y, 0.0) && s.p.x.abs() > EPS_POS)
        .map(|s| s.p.x)
        .collect();
    let west = base.iter().filter(|&&x| x < 0.0).count();
    let sigma = base.iter().map(|x| x.abs()).reduce(f64::min).unwrap_or(4.0);
    let spec = spec_from_sigma(sigma).ok()?;
    let k = west + 1;
    Some(Point::new(-spec.offset(k)?, spec.height(k)?))
}

fn on_line(s: &Seen, k: f64) -> bool {
    near(s.p.y, k)
}

/// East-first ordering key for "closest to the axis".
fn axis_key(x: f64) -> (f64, f64) {
    (x.abs(), -x)
}

pub fn decide_subordinate(me: Point, view: &View) -> Decision {
    if view.entries.iter().any(|e| e.color == Color::Final) {
        return final_phase(me, view);
    }
    let stay = Decision::stay(me, Color::Subordinate);
    let Some(frame) = LocalFrame::from_view(view) else {
        return stay;
    };
    let seen = seen_in(&frame, view);
    let p = frame.rel(me);
    let go = |x: f64, y: f64| Decision::go(frame.abs(x, y), Color::Subordinate);
    let on_axis = p.x.abs() <= EPS_POS;
    let leading = frame.leader_color == Color::Leader;

    // The last robot: everyone else is on the base, so head for the
    // vertex beyond the west branch.
    if leading && p.y > EPS_POS && seen.iter().all(|s| on_line(s, 0.0)) {
        return match last_robot_target(&seen) {
            Some(t) if t.dist(p) <= EPS_POS => Decision::stay(me, Color::Final),
            // Cross above the base first, then drop onto the vertex.
            Some(t) if !near(t.x, p.x) => go(t.x, p.y),
            Some(t) => go(t.x, t.y),
            None => stay,
        };
    }
    // Descend to L10 along a clear vertical corridor.
    if p.y > 10.0 + EPS_POS {
        let (from, to) = (p, Point::new(p.x, 10.0));
        let blocked = seen
            .iter()
            .any(|s| segment_point_distance(from, to, s.p) < 2.0 - EPS_POS);
        return if blocked { stay } else { go(p.x, 10.0) };
    }
    if near(p.y, 10.0) {
        let l8_busy = seen.iter().any(|s| on_line(s, 8.0));
        let beaten = seen
            .iter()
            .any(|s| on_line(s, 10.0) && axis_key(s.p.x) < axis_key(p.x));
        return if l8_busy || beaten {
            stay
        } else {
            go(p.x, 8.0)
        };
    }
    if near(p.y, 8.0) {
        return if on_axis {
            let l6_busy = seen.iter().any(|s| on_line(s, 6.0));
            if l6_busy {
                stay
            } else {
                go(0.0, 6.0)
            }
        } else {
            slide_along_l8(p, &seen).map_or(stay, |x| go(x, 8.0))
        };
    }
    if on_axis && near(p.y, 6.0) {
        if seen
            .iter()
            .any(|s| s.p.y > EPS_POS && s.p.y < 6.0 - EPS_POS)
        {
            return stay;
        }
        return match insertion_slot(&seen) {
            Ok(_) => go(0.0, 2.0),
            Err(()) => Decision::stay(me, Color::NoSpace),
        };
    }
    if on_axis && p.y > 2.0 + EPS_POS && p.y < 6.0 - EPS_POS {
        return go(0.0, 2.0);
    }
    if on_axis && near(p.y, 2.0) {
        return match insertion_slot(&seen) {
            Ok(x) => go(x, 2.0),
            Err(()) => stay,
        };
    }
    if near(p.y, 2.0) {
        return if leading {
            settle_from_l2(p, &seen).map_or(stay, |(x, y)| go(x, y))
        } else if seen
            .iter()
            .any(|s| on_line(s, 2.0) && s.p.x.signum() == p.x.signum() && s.p.x.abs() > p.x.abs())
        {
            // Rose while an earlier mover was hidden behind the base; step
            // back so it keeps sight of the leader.
            go(p.x, 0.0)
        } else {
            expansion_step(p, &seen).map_or(stay, |(x, y)| go(x, y))
        };
    }
    if near(p.y, 4.0) {
        let released = leading
            && seen
                .iter()
                .any(|s| s.color == Color::Subordinate && on_line(s, 6.0));
        // Stepping to L3 first keeps a cut-short descent off L2, which
        // belongs to newcomers.
        return if released { go(p.x, 3.0) } else { stay };
    }
    let expanding = frame.leader_color == Color::Expand;
    let l2_busy = || {
        seen.iter()
            .any(|s| on_line(s, 2.0) && s.p.x.signum() == p.x.signum())
    };
    if near(p.y, 0.0) {
        // Peek from one unit up first: an outer mover on L2 is usually
        // hidden from the base line by the robots still on it.
        let peeking = seen
            .iter()
            .any(|s| s.p.x.signum() == p.x.signum() && s.p.y > EPS_POS && s.p.y < 2.0 - EPS_POS);
        return if expanding && !l2_busy() && !peeking {
            go(p.x, 1.0)
        } else {
            stay
        };
    }
    if expanding && near(p.y, 1.0) {
        return if l2_busy() {
            go(p.x, 0.0)
        } else {
            go(p.x, 2.0)
        };
    }
    // Resume an interrupted return from L4 to the base line. Stop at y = 1
    // on the way: just above the base the leader hides behind its bodies, so
    // the last leg must be short enough to finish in one move.
    if leading && p.y > 1.0 + EPS_POS && p.y < 4.0 - EPS_POS {
        return go(p.x, 1.0);
    }
    if leading && p.y > EPS_POS && p.y < 4.0 - EPS_POS {
        return go(p.x, 0.0);
    }
    stay
}

/// Target abscissa on L8 while heading for the axis, or `None` to wait.
fn slide_along_l8(p: Point, seen: &[Seen]) -> Option<f64> {
    let dir = -p.x.signum();
    let mut target = 0.0f64;
    for s in seen.iter().filter(|s| on_line(s, 8.0)) {
        if dir < 0.0 && s.p.x < p.x {
            // East side: stop two short of anyone ahead, axis included.
            target = target.max(s.p.x + 2.0);
        } else if dir > 0.0 && s.p.x > p.x {
            // West side yields the axis to the east side.
            target = target.min(s.p.x.min(0.0) - 2.0);
        }
    }
    // A west robot crowding the axis backs off to let the east side through.
    if near(target, p.x) {
        return None;
    }
    let (lo, hi) = (p.x.min(target), p.x.max(target));
    let threats: Vec<f64> = seen
        .iter()
        .filter(|s| on_line(s, 10.0))
        .map(|s| s.p.x)
        .filter(|&x| x > lo - 2.0 + EPS_POS && x < hi + 2.0 - EPS_POS)
        .collect();
    if threats.len() >= 2 {
        let nearest = threats
            .iter()
            .copied()
            .min_by(|a, b| axis_key(*a).partial_cmp(&axis_key(*b)).expect("finite"))
            .expect("non-empty");
        let d = (p.x - nearest).abs();
        if d > 5.0 {
            let reach = (target - p.x).abs().min(d - 2.0);
            target = p.x + (target - p.x).signum() * reach;
        }
    }
    Some(target)
}

/// A newcomer on L2 travelling to its slot while the leader shows `leader`.
fn settle_from_l2(p: Point, seen: &[Seen]) -> Option<(f64, f64)> {
    let x = insertion_slot(seen).ok()?;
    if !near(x, p.x) {
        return Some((x, 2.0));
    }
    let free = !seen
        .iter()
        .any(|s| on_line(s, 0.0) && (s.p.x - x).abs() < 2.0 - EPS_POS);
    free.then_some((x, 0.0))
}

/// A subordinate on L2 during an expansion, moving to its slot on L4.
fn expansion_step(p: Point, seen: &[Seen]) -> Option<(f64, f64)> {
    let sign = p.x.signum();
    let own = |s: &&Seen| s.p.x.signum() == sign && s.p.x.abs() > EPS_POS;
    let queued: Vec<f64> = seen
        .iter()
        .filter(own)
        .filter(|s| on_line(s, 4.0))
        .map(|s| s.p.x.abs())
        .collect();
    let target = if queued.is_empty() {
        // First to rise: align with the old second base robot, which every
        // half has since a branch only fills up after several placements.
        let innermost = |same_half: bool| {
            seen.iter()
                .filter(|s| on_line(s, 0.0) && s.p.x.abs() > EPS_POS)
                .filter(|s| (s.p.x.signum() == sign) == same_half)
                .map(|s| s.p.x.abs())
                .reduce(f64::min)
        };
        let sigma = innermost(true)
            .or_else(|| innermost(false))
            .unwrap_or(1.5 * p.x.abs());
        sign * sigma
    } else {
        let sigma = queued.iter().copied().fold(f64::INFINITY, f64::min);
        let spec = spec_from_sigma(sigma).ok()?;
        sign * spec.offset(queued.len() + 1)?
    };
    if near(target, p.x) {
        Some((target, 4.0))
    } else {
        Some((target, 2.0))
    }
}

/// Lifting the base robots onto the chain once the last robot is final.
/// The west branch goes first, outermost first, while the leader still
/// shows `leader`; then the leader turns `final` and the east branch
/// follows innermost first, copying the heights of the west branch.
fn final_phase(me: Point, view: &View) -> Decision {
    let stay = Decision::stay(me, Color::Subordinate);
    let es = &view.entries;
    let west_done = es
        .iter()
        .filter(|e| e.position.x < me.x - EPS_POS)
        .all(|e| e.color == Color::Final);
    if !west_done {
        return stay;
    }
    if let Some(frame) = LocalFrame::from_view(view) {
        if frame.leader_color == Color::Leader && frame.rel(me).x < -EPS_POS {
            return lift_west(me, &frame, view).unwrap_or(stay);
        }
        return stay;
    }
    let finals: Vec<Point> = es
        .iter()
        .filter(|e| e.color == Color::Final)
        .map(|e| e.position)
        .collect();
    let Some(nearest) = finals
        .iter()
        .copied()
        .filter(|p| p.x < me.x - EPS_POS)
        .max_by(|a, b| a.x.partial_cmp(&b.x).expect("finite"))
    else {
        return stay;
    };
    // The mirror image of my vertex is the final robot just west of the
    // partner of my west neighbour (same height, other branch), or just
    // west of the tip when my west neighbour is the tip itself.
    let lowest = finals.iter().map(|g| g.y).fold(f64::INFINITY, f64::min);
    let partner = finals
        .iter()
        .copied()
        .filter(|g| near(g.y, nearest.y) && g.x < nearest.x - EPS_POS)
        .max_by(|a, b| a.x.partial_cmp(&b.x).expect("finite"));
    let is_tip = nearest.y <= me.y + EPS_POS && nearest.y <= lowest + EPS_POS;
    let base = partner.or(is_tip.then_some(nearest));
    let mirror = base.and_then(|b| {
        finals
            .iter()
            .copied()
            .filter(|g| g.x < b.x - EPS_POS)
            .max_by(|a, b| a.x.partial_cmp(&b.x).expect("finite"))
    });
    match mirror {
        Some(m) if near(m.y, me.y) => Decision::stay(me, Color::Final),
        Some(m) => Decision::go(Point::new(me.x, m.y), Color::Subordinate),
        // Climb in steps of 2, up to two above the west neighbour, until
        // the leader or the mirror pair comes into view.
        None if me.y < nearest.y + 2.0 - EPS_POS => {
            let y = (me.y + 2.0).min(nearest.y + 2.0);
            Decision::go(Point::new(me.x, y), Color::Subordinate)
        }
        None => stay,
    }
}

fn lift_west(me: Point, frame: &LocalFrame, view: &View) -> Option<Decision> {
    let p = frame.rel(me);
    let seen = seen_in(frame, view);
    let on_base = near(p.y, 0.0);
    let sigma = seen
        .iter()
        .filter(|s| on_line(s, 0.0) && s.p.x < -EPS_POS)
        .map(|s| s.p.x.abs())
        .chain(on_base.then_some(p.x.abs()))
        .reduce(f64::min)
        // Nobody left on the base: this is the innermost robot, lifted.
        .unwrap_or(p.x.abs());
    let spec = spec_from_sigma(sigma).ok()?;
    let m = spec.index_of_offset(p.x.abs(), 1e3 * EPS_POS)?;
    let h = spec.height(m)?;
    if near(p.y, h) {
        Some(Decision::stay(me, Color::Final))
    } else {
        Some(Decision::go(frame.abs(p.x, h), Color::Subordinate))
    }
}

/// One Compute step. Pure: the result depends only on the arguments.
///
/// Any move whose straight path would come within 2 of a visible robot's
/// centre is replaced by staying put with the old light, so that a robot
/// never starts a move it can already see to be unsafe.
pub fn compute(me: &Robot, view: &View, params: &ProtocolParams) -> Decision {
    let at = me.position;
    let d = match me.color {
        Color::Off => decide_off(at, view, params),
        Color::Defeated => decide_defeated(at, view),
        Color::Leader | Color::Expand => decide_leader(me, view),
        Color::Subordinate => decide_subordinate(at, view),
        Color::NoSpace => decide_no_space(at, view),
        Color::Final => Decision::stay(at, Color::Final),
    };
    let unsafe_path = d.destination.dist(at) > 0.0
        && view
            .entries
            .iter()
            .any(|e| segment_point_distance(at, d.destination, e.position) < 2.0 - EPS_POS);
    if unsafe_path {
        Decision::stay(at, me.color)
    } else {
        d
    }
}
