//! Round-based execution: activation, simultaneous snapshots, moves under
//! an adversary, safety monitors, phase markers and trace records.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::spec_from_sigma;
use crate::geometry::{segment_point_distance, Point};
use crate::protocol::{compute, Color, Decision, ProtocolParams, Robot, EPS_POS};
use crate::visibility::{is_visible_analytic, View, ViewEntry, VisibilityModel};

pub const TRACE_FORMAT_VERSION: u32 = 1;
pub const STARVATION_CAP: u64 = 10_000;
pub const LIVELOCK_ROUNDS: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Error, Serialize, Deserialize)]
pub enum EngineError {
    #[error("pairwise distance < 2 between robots {0} and {1} ({2})")]
    TooClose(usize, usize, f64),
    #[error("configuration has no robots")]
    Empty,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("safety violation in round {round}: {violations:?}")]
    SafetyViolation {
        round: u64,
        violations: Vec<Violation>,
    },
    #[error("no change for {LIVELOCK_ROUNDS} rounds, stuck at round {0}")]
    LivelockSuspected(u64),
    #[error("round limit {0} reached")]
    RoundLimit(u64),
    #[error("a leader is present")]
    LeaderPresent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Collision {
        a: usize,
        b: usize,
        distance: f64,
    },
    IllegalTransition {
        robot: usize,
        from: Color,
        to: Color,
    },
    MultipleLeaders {
        count: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub robots: Vec<Robot>,
    pub model: VisibilityModel,
    pub params: ProtocolParams,
}

impl Configuration {
    /// All lights `off`, after checking the pairwise distance invariant.
    pub fn new(
        positions: &[Point],
        model: VisibilityModel,
        params: ProtocolParams,
    ) -> Result<Self, EngineError> {
        let robots = positions
            .iter()
            .map(|&p| Robot::new(p, Color::Off))
            .collect();
        let cfg = Configuration {
            robots,
            model,
            params,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.robots.is_empty() {
            return Err(EngineError::Empty);
        }
        for (i, a) in self.robots.iter().enumerate() {
            for (j, b) in self.robots.iter().enumerate().skip(i + 1) {
                let d = a.position.dist(b.position);
                if d < 2.0 - EPS_POS {
                    return Err(EngineError::TooClose(i, j, d));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.robots.len()
    }

    pub fn centers(&self) -> Vec<Point> {
        self.robots.iter().map(|r| r.position).collect()
    }

    pub fn leader(&self) -> Option<usize> {
        self.robots
            .iter()
            .position(|r| matches!(r.color, Color::Leader | Color::Expand))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerMode {
    Fsync,
    Ssync,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerPolicy {
    pub mode: SchedulerMode,
    pub activation_probability: f64,
    pub seed: u64,
}

impl SchedulerPolicy {
    pub fn fsync() -> Self {
        SchedulerPolicy {
            mode: SchedulerMode::Fsync,
            activation_probability: 1.0,
            seed: 0,
        }
    }

    pub fn ssync(p: f64, seed: u64) -> Self {
        SchedulerPolicy {
            mode: SchedulerMode::Ssync,
            activation_probability: p,
            seed,
        }
    }

    fn validate(&self) -> Result<(), EngineError> {
        let p = self.activation_probability;
        if self.mode == SchedulerMode::Ssync && !(p > 0.0 && p <= 1.0) {
            return Err(EngineError::InvalidPolicy(format!(
                "activation probability {p}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovementKind {
    Rigid,
    Nonrigid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adversary {
    Full,
    AlwaysDelta,
    UniformRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovementPolicy {
    pub kind: MovementKind,
    pub delta: f64,
    pub adversary: Adversary,
    pub seed: u64,
}

impl MovementPolicy {
    pub fn rigid() -> Self {
        MovementPolicy {
            kind: MovementKind::Rigid,
            delta: 2.0,
            adversary: Adversary::Full,
            seed: 0,
        }
    }

    pub fn nonrigid(delta: f64, adversary: Adversary, seed: u64) -> Self {
        MovementPolicy {
            kind: MovementKind::Nonrigid,
            delta,
            adversary,
            seed,
        }
    }

    fn validate(&self) -> Result<(), EngineError> {
        if self.delta.is_nan() || self.delta < 2.0 {
            return Err(EngineError::InvalidPolicy(format!(
                "delta {} < 2",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Activation draws with a starvation cap: a robot idle for more than
/// [`STARVATION_CAP`] rounds is forced into the next set.
#[derive(Clone, Debug)]
pub struct Scheduler {
    policy: SchedulerPolicy,
    rng: ChaCha8Rng,
    idle: Vec<u64>,
}

impl Scheduler {
    pub fn new(policy: SchedulerPolicy, n: usize) -> Self {
        Scheduler {
            policy,
            rng: ChaCha8Rng::seed_from_u64(policy.seed),
            idle: vec![0; n],
        }
    }

    pub fn next_set(&mut self) -> Vec<usize> {
        let n = self.idle.len();
        let mut set = activation_set(&self.policy, n, &mut self.rng);
        for (i, idle) in self.idle.iter().enumerate() {
            if *idle >= STARVATION_CAP && !set.contains(&i) {
                set.push(i);
            }
        }
        set.sort_unstable();
        for (i, idle) in self.idle.iter_mut().enumerate() {
            *idle = if set.binary_search(&i).is_ok() {
                0
            } else {
                *idle + 1
            };
        }
        set
    }
}

/// FSYNC activates everyone; SSYNC draws each robot independently and
/// redraws an empty set.
pub fn activation_set(policy: &SchedulerPolicy, n: usize, rng: &mut impl Rng) -> Vec<usize> {
    if policy.mode == SchedulerMode::Fsync || n == 0 {
        return (0..n).collect();
    }
    loop {
        let set: Vec<usize> = (0..n)
            .filter(|_| rng.gen_bool(policy.activation_probability))
            .collect();
        if !set.is_empty() {
            return set;
        }
    }
}

pub fn apply_move(from: Point, dest: Point, policy: &MovementPolicy, rng: &mut impl Rng) -> Point {
    let total = from.dist(dest);
    if policy.kind == MovementKind::Rigid || total <= policy.delta {
        return dest;
    }
    let t = match policy.adversary {
        Adversary::Full => return dest,
        Adversary::AlwaysDelta => policy.delta,
        Adversary::UniformRandom => rng.gen_range(policy.delta..=total),
    };
    from + (dest - from) * (t / total)
}

/// Minimum distance between two points moving uniformly from `a0` to `a1`
/// and from `b0` to `b1` over the same unit time interval.
pub fn swept_min_distance(a0: Point, a1: Point, b0: Point, b1: Point) -> f64 {
    let p = b0 - a0;
    let v = (b1 - b0) - (a1 - a0);
    let vv = v.norm_sq();
    let t = if vv > 0.0 {
        (-p.dot(v) / vv).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p + v * t).norm()
}

/// Sampled counterpart of [`swept_min_distance`] used as a cross-check.
pub fn swept_min_distance_sampled(a0: Point, a1: Point, b0: Point, b1: Point, steps: usize) -> f64 {
    (0..=steps)
        .map(|k| {
            let t = k as f64 / steps as f64;
            let a = a0 + (a1 - a0) * t;
            let b = b0 + (b1 - b0) * t;
            a.dist(b)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Violations of one transition from `before` to `after`.
pub fn safety_check(before: &[Robot], after: &[Robot]) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = before.len();
    let moved: Vec<bool> = (0..n)
        .map(|i| before[i].position != after[i].position)
        .collect();
    for i in 0..n {
        for j in i + 1..n {
            if !(moved[i] || moved[j]) {
                continue;
            }
            let d = swept_min_distance(
                before[i].position,
                after[i].position,
                before[j].position,
                after[j].position,
            );
            if d < 2.0 - EPS_POS {
                out.push(Violation::Collision {
                    a: i,
                    b: j,
                    distance: d,
                });
            }
        }
    }
    for (i, (b, a)) in before.iter().zip(after).enumerate() {
        if !b.color.may_become(a.color) {
            out.push(Violation::IllegalTransition {
                robot: i,
                from: b.color,
                to: a.color,
            });
        }
    }
    let leaders = after
        .iter()
        .filter(|r| matches!(r.color, Color::Leader | Color::Expand))
        .count();
    if leaders > 1 {
        out.push(Violation::MultipleLeaders { count: leaders });
    }
    out
}

/// Size of the potential set used in the leader-election argument: ordered
/// pairs `(r, r')` with `r` off and `r'` bad for `r`, live and north of
/// `r`, or south of `r`.
pub fn potential_b(robots: &[Robot], camera_radius: f64) -> Result<usize, EngineError> {
    if robots
        .iter()
        .any(|r| matches!(r.color, Color::Leader | Color::Expand))
    {
        return Err(EngineError::LeaderPresent);
    }
    let mut count = 0;
    for (i, r) in robots.iter().enumerate() {
        if r.color != Color::Off {
            continue;
        }
        for (j, q) in robots.iter().enumerate() {
            if i == j {
                continue;
            }
            let dy = q.position.y - r.position.y;
            let same_line = dy.abs() <= EPS_POS;
            let bad = same_line || (dy > 0.0 && dy < 1.0 - camera_radius);
            let live_north = q.color == Color::Off && dy > EPS_POS;
            let south = dy < -EPS_POS;
            if bad || live_north || south {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// The off robot with the largest y, ties broken westmost.
fn northmost_westmost_live(robots: &[Robot]) -> Option<usize> {
    robots
        .iter()
        .enumerate()
        .filter(|(_, r)| r.color == Color::Off)
        .max_by(|(_, a), (_, b)| {
            let ka = (a.position.y, -a.position.x);
            let kb = (b.position.y, -b.position.x);
            ka.partial_cmp(&kb).expect("finite")
        })
        .map(|(i, _)| i)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// The whole algorithm, up to every robot showing `final`.
    Full,
    /// Leader election only: leader lights are shown to others as
    /// `defeated` and the run stops once no `off` robot remains.
    LeaderOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub round: u64,
    pub robot: usize,
    pub from: Point,
    pub to: Point,
    /// Where the robot was heading; `to` lies on the segment towards it.
    pub destination: Point,
    pub color_before: Color,
    pub color_after: Color,
    pub activated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: u64,
    pub activated: usize,
    pub moved: usize,
    pub epochs: u64,
    pub leader: Option<usize>,
    pub potential: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub mode: RunMode,
    pub scheduler: SchedulerPolicy,
    pub movement: MovementPolicy,
    pub params: ProtocolParams,
    pub camera_radius: f64,
    pub robots: Vec<Robot>,
    /// Fairness is enforced by forcing robots idle for this many rounds.
    pub starvation_cap: u64,
}

/// One line of a JSONL trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(TraceHeader),
    Event(TraceEvent),
    Round(RoundSummary),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub events: Vec<TraceEvent>,
    pub summary: RoundSummary,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseMarkers {
    pub t1: Option<u64>,
    pub t2: Option<u64>,
    pub t3: Option<u64>,
}

/// Counters accumulated while the run progresses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub epochs: u64,
    pub false_southmost_moves: u64,
    /// Epochs until `n - 1` robots show `defeated` (leader-only runs).
    pub epochs_to_defeat: Option<u64>,
    pub expansions: u64,
    pub total_distance: f64,
    pub stretch_history: Vec<f64>,
}

/// Outcomes of the runtime checks that do not abort a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Monitors {
    pub potential_increases: u64,
    pub potential_stalled_epochs: u64,
    pub off_moves_after_leader: u64,
    pub leaders_ever: usize,
    pub leader_separation: Option<f64>,
    pub final_mutually_visible: Option<bool>,
    pub final_matches_chain: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    SafetyViolation {
        round: u64,
        violations: Vec<Violation>,
    },
    LivelockSuspected {
        round: u64,
    },
    RoundLimit {
        round: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub rounds: u64,
    pub markers: PhaseMarkers,
    pub tally: Tally,
    pub monitors: Monitors,
    pub robots: Vec<Robot>,
}

/// Pairwise visibility, recomputed lazily for pairs a move may affect.
#[derive(Clone, Debug)]
struct VisCache {
    n: usize,
    cells: Vec<Option<bool>>,
}

impl VisCache {
    fn new(n: usize) -> Self {
        VisCache {
            n,
            cells: vec![None; n * n],
        }
    }

    fn get(&mut self, i: usize, j: usize, centers: &[Point], model: &VisibilityModel) -> bool {
        let cell = &mut self.cells[i * self.n + j];
        *cell.get_or_insert_with(|| is_visible_analytic(i, j, centers, model))
    }

    /// Forget pairs whose answer can change when a robot moves from `p0`
    /// to `p1`: pairs involving it, and pairs whose centre segment passes
    /// within 2 of either position.
    fn invalidate(&mut self, mover: usize, p0: Point, p1: Point, centers: &[Point]) {
        let reach = 2.0 + 1e-6;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let (a, b) = (i * self.n + j, j * self.n + i);
                if self.cells[a].is_none() && self.cells[b].is_none() {
                    continue;
                }
                let hit = i == mover
                    || j == mover
                    || segment_point_distance(centers[i], centers[j], p0) <= reach
                    || segment_point_distance(centers[i], centers[j], p1) <= reach;
                if hit {
                    self.cells[a] = None;
                    self.cells[b] = None;
                }
            }
        }
    }
}

pub struct Simulation {
    config: Configuration,
    mode: RunMode,
    scheduler: Scheduler,
    scheduler_policy: SchedulerPolicy,
    movement: MovementPolicy,
    move_rng: ChaCha8Rng,
    cache: VisCache,
    round: u64,
    idle_rounds: u64,
    since_epoch: Vec<bool>,
    epoch_start_potential: Option<usize>,
    epoch_hit_northmost: bool,
    sigma: f64,
    ever_leader: Vec<bool>,
    leader_idx: Option<usize>,
    markers: PhaseMarkers,
    tally: Tally,
    monitors: Monitors,
    initial: Vec<Robot>,
}

impl Simulation {
    pub fn new(
        config: Configuration,
        scheduler: SchedulerPolicy,
        movement: MovementPolicy,
        mode: RunMode,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        scheduler.validate()?;
        movement.validate()?;
        let n = config.n();
        let potential = potential_b(&config.robots, config.model.camera_radius).ok();
        Ok(Simulation {
            mode,
            scheduler: Scheduler::new(scheduler, n),
            scheduler_policy: scheduler,
            movement,
            move_rng: ChaCha8Rng::seed_from_u64(movement.seed),
            cache: VisCache::new(n),
            round: 0,
            idle_rounds: 0,
            since_epoch: vec![false; n],
            epoch_start_potential: potential,
            epoch_hit_northmost: false,
            sigma: INITIAL_SIGMA,
            ever_leader: vec![false; n],
            leader_idx: None,
            markers: PhaseMarkers::default(),
            tally: Tally::default(),
            monitors: Monitors::default(),
            initial: config.robots.clone(),
            config,
        })
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn markers(&self) -> PhaseMarkers {
        self.markers
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            format_version: TRACE_FORMAT_VERSION,
            mode: self.mode,
            scheduler: self.scheduler_policy,
            movement: self.movement,
            params: self.config.params,
            camera_radius: self.config.model.camera_radius,
            robots: self.initial.clone(),
            starvation_cap: STARVATION_CAP,
        }
    }

    /// The Look phase for robot `i` against the current configuration.
    pub fn view(&mut self, i: usize) -> View {
        let centers = self.config.centers();
        let n = self.config.n();
        let mut entries = Vec::new();
        for j in (0..n).filter(|&j| j != i) {
            if self.cache.get(i, j, &centers, &self.config.model) {
                let r = self.config.robots[j];
                let color = match (self.mode, r.color) {
                    (RunMode::LeaderOnly, Color::Leader | Color::Expand) => Color::Defeated,
                    (_, c) => c,
                };
                entries.push(ViewEntry {
                    position: r.position,
                    color,
                });
            }
        }
        View {
            observer: i,
            entries,
        }
    }

    pub fn is_finished(&self) -> bool {
        match self.mode {
            RunMode::Full => self.markers.t3.is_some(),
            RunMode::LeaderOnly => {
                self.markers.t1.is_some()
                    && !self.config.robots.iter().any(|r| r.color == Color::Off)
            }
        }
    }
}

impl Simulation {
    /// One round: every activated robot looks at the same configuration,
    /// then all moves and light changes are applied together.
    pub fn step(&mut self) -> Result<RoundRecord, EngineError> {
        self.step_with(compute)
    }

    /// [`Simulation::step`] with another Compute function, for driving
    /// the engine with rules other than the protocol's.
    pub fn step_with(
        &mut self,
        mut decide: impl FnMut(&Robot, &View, &ProtocolParams) -> Decision,
    ) -> Result<RoundRecord, EngineError> {
        self.round += 1;
        let round = self.round;
        let active = self.scheduler.next_set();
        let before = self.config.robots.clone();
        let no_leader_before = self.config.leader().is_none();
        let potential_before = potential_b(&before, self.config.model.camera_radius).ok();
        let northmost = northmost_westmost_live(&before);

        let mut decisions = Vec::with_capacity(active.len());
        for &i in &active {
            let view = self.view(i);
            decisions.push(decide(&before[i], &view, &self.config.params));
        }

        let mut after = before.clone();
        let mut events = Vec::with_capacity(active.len());
        for (&i, d) in active.iter().zip(&decisions) {
            let from = before[i].position;
            let to = apply_move(from, d.destination, &self.movement, &mut self.move_rng);
            after[i] = Robot::new(to, d.color);
            events.push(TraceEvent {
                round,
                robot: i,
                from,
                to,
                destination: d.destination,
                color_before: before[i].color,
                color_after: d.color,
                activated: true,
            });
        }

        let violations = safety_check(&before, &after);
        if !violations.is_empty() {
            self.config.robots = after;
            return Err(EngineError::SafetyViolation { round, violations });
        }

        self.count_moves(&before, &events);
        self.config.robots = after;
        let centers = self.config.centers();
        for e in events.iter().filter(|e| e.from != e.to) {
            self.cache.invalidate(e.robot, e.from, e.to, &centers);
        }

        let changed = events
            .iter()
            .any(|e| e.from != e.to || e.color_before != e.color_after);
        self.idle_rounds = if changed { 0 } else { self.idle_rounds + 1 };

        let potential_after =
            potential_b(&self.config.robots, self.config.model.camera_radius).ok();
        if let (Some(b0), Some(b1)) = (potential_before, potential_after) {
            if b1 > b0 {
                self.monitors.potential_increases += 1;
            }
        }
        if no_leader_before && northmost.is_some_and(|k| active.contains(&k)) {
            self.epoch_hit_northmost = true;
        }
        self.advance_epoch(&active, potential_after);
        self.update_markers(round, &before);

        let moved = events.iter().filter(|e| e.from != e.to).count();
        Ok(RoundRecord {
            events,
            summary: RoundSummary {
                round,
                activated: active.len(),
                moved,
                epochs: self.tally.epochs,
                leader: self.config.leader(),
                potential: potential_after,
            },
        })
    }

    fn count_moves(&mut self, before: &[Robot], events: &[TraceEvent]) {
        for e in events {
            let dist = e.from.dist(e.to);
            self.tally.total_distance += dist;
            if e.color_before != Color::Off || dist == 0.0 {
                continue;
            }
            if self.markers.t1.is_some() {
                self.monitors.off_moves_after_leader += 1;
            }
            let someone_south = before
                .iter()
                .enumerate()
                .any(|(j, r)| j != e.robot && r.position.y < e.from.y - EPS_POS);
            if e.to.y < e.from.y && someone_south {
                self.tally.false_southmost_moves += 1;
            }
        }
    }

    fn advance_epoch(&mut self, active: &[usize], potential: Option<usize>) {
        for &i in active {
            self.since_epoch[i] = true;
        }
        if !self.since_epoch.iter().all(|&b| b) {
            return;
        }
        self.tally.epochs += 1;
        self.since_epoch.iter_mut().for_each(|b| *b = false);
        if let (Some(b0), Some(b1)) = (self.epoch_start_potential, potential) {
            if self.epoch_hit_northmost && b0 > 0 && b1 >= b0 {
                self.monitors.potential_stalled_epochs += 1;
            }
        }
        self.epoch_start_potential = potential;
        self.epoch_hit_northmost = false;
    }

    /// Epochs including the one in progress.
    fn epochs_so_far(&self) -> u64 {
        self.tally.epochs + u64::from(self.since_epoch.iter().any(|&b| b))
    }
}

impl Simulation {
    fn update_markers(&mut self, round: u64, before: &[Robot]) {
        let robots = &self.config.robots;
        let n = robots.len();
        for (i, r) in robots.iter().enumerate() {
            if matches!(r.color, Color::Leader | Color::Expand) && !self.ever_leader[i] {
                self.ever_leader[i] = true;
                self.monitors.leaders_ever += 1;
            }
        }
        for (b, a) in before.iter().zip(robots) {
            if b.color == Color::Leader && a.color == Color::Expand {
                self.tally.expansions += 1;
                self.sigma = expanded_sigma(self.sigma);
                self.tally.stretch_history.push(stretch_of(self.sigma));
            }
        }
        let defeated = robots.iter().filter(|r| r.color == Color::Defeated).count();
        if self.tally.epochs_to_defeat.is_none() && n > 1 && defeated + 1 >= n {
            self.tally.epochs_to_defeat = Some(self.epochs_so_far());
        }
        if self.leader_idx.is_none() {
            self.leader_idx = self.config.leader();
        }
        let Some(leader) = self.leader_idx else {
            return;
        };
        let robots = &self.config.robots;
        if self.markers.t1.is_none() {
            self.markers.t1 = Some(round);
            let lp = robots[leader].position;
            let gap = robots
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != leader)
                .map(|(_, r)| r.position.y - lp.y)
                .fold(f64::INFINITY, f64::min);
            self.monitors.leader_separation = Some(gap);
            self.tally.stretch_history.push(stretch_of(INITIAL_SIGMA));
            if n == 1 {
                self.markers.t2 = Some(round);
                self.markers.t3 = Some(round);
                return;
            }
        }
        if self.mode == RunMode::LeaderOnly {
            return;
        }
        if self.markers.t2.is_none() && base_chain_complete(robots, leader) {
            self.markers.t2 = Some(round);
        }
        if self.markers.t3.is_none() && robots.iter().all(|r| r.color == Color::Final) {
            self.markers.t3 = Some(round);
            self.markers.t2.get_or_insert(round);
            let centers = self.config.centers();
            self.monitors.final_mutually_visible = Some(crate::visibility::all_mutually_visible(
                &centers,
                &self.config.model,
            ));
            self.monitors.final_matches_chain = Some(matches_chain(&centers, leader));
        }
    }
}

/// Distance from the leader to the first base robot before any expansion.
pub const INITIAL_SIGMA: f64 = 4.0;

/// An expansion moves the first base robot to where the second one was.
pub fn expanded_sigma(sigma: f64) -> f64 {
    spec_from_sigma(sigma)
        .ok()
        .and_then(|s| s.offset(2))
        .unwrap_or(1.5 * sigma)
}

pub fn stretch_of(sigma: f64) -> f64 {
    spec_from_sigma(sigma)
        .map(|s| s.stretch)
        .unwrap_or(f64::NAN)
}

/// `n - 1` robots, the leader included, sit on the leader's line at
/// distinct offsets of the base chain fixed by the innermost robot.
pub fn base_chain_complete(robots: &[Robot], leader: usize) -> bool {
    let lp = robots[leader].position;
    let xs: Vec<f64> = robots
        .iter()
        .enumerate()
        .filter(|&(j, r)| j != leader && (r.position.y - lp.y).abs() <= EPS_POS)
        .map(|(_, r)| r.position.x - lp.x)
        .collect();
    if xs.len() + 2 != robots.len() {
        return false;
    }
    if xs.is_empty() {
        return true;
    }
    let sigma = xs.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    let Ok(spec) = spec_from_sigma(sigma) else {
        return false;
    };
    let mut slots: Vec<(bool, usize)> = Vec::new();
    for &x in &xs {
        match spec.index_of_offset(x.abs(), 1e3 * EPS_POS) {
            Some(m) if !slots.contains(&(x > 0.0, m)) => slots.push((x > 0.0, m)),
            _ => return false,
        }
    }
    true
}

/// Whether the robots form a symmetric chain with its tip at the leader.
fn matches_chain(centers: &[Point], leader: usize) -> bool {
    let tip = centers[leader];
    let rel: Vec<Point> = centers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != leader)
        .map(|(_, &p)| p - tip)
        .collect();
    if rel.is_empty() {
        return true;
    }
    let sigma = rel.iter().map(|p| p.x.abs()).fold(f64::INFINITY, f64::min);
    let east = rel.iter().filter(|p| p.x > 0.0).count();
    let west = rel.len() - east;
    let Ok(spec) = spec_from_sigma(sigma) else {
        return false;
    };
    let Ok(expected) = crate::chain::chain_points(&spec, east, west, Point::ORIGIN) else {
        return false;
    };
    let tol = 1e3 * EPS_POS;
    rel.iter()
        .all(|p| expected[1..].iter().any(|q| p.dist(*q) <= tol))
}

impl Simulation {
    /// Runs until the mode's end condition, a safety violation, a
    /// suspected livelock or `max_rounds`. Each round is handed to `sink`.
    pub fn run(&mut self, max_rounds: u64, sink: impl FnMut(&RoundRecord)) -> RunOutcome {
        self.run_with(max_rounds, compute, sink)
    }

    pub fn run_with(
        &mut self,
        max_rounds: u64,
        mut decide: impl FnMut(&Robot, &View, &ProtocolParams) -> Decision,
        mut sink: impl FnMut(&RoundRecord),
    ) -> RunOutcome {
        let status = loop {
            if self.is_finished() {
                break RunStatus::Completed;
            }
            if self.round >= max_rounds {
                break RunStatus::RoundLimit { round: self.round };
            }
            match self.step_with(&mut decide) {
                Ok(rec) => sink(&rec),
                Err(EngineError::SafetyViolation { round, violations }) => {
                    break RunStatus::SafetyViolation { round, violations }
                }
                Err(e) => unreachable!("step only fails on safety: {e}"),
            }
            if self.idle_rounds >= LIVELOCK_ROUNDS {
                break RunStatus::LivelockSuspected { round: self.round };
            }
        };
        RunOutcome {
            status,
            rounds: self.round,
            markers: self.markers,
            tally: self.tally.clone(),
            monitors: self.monitors.clone(),
            robots: self.config.robots.clone(),
        }
    }
}
