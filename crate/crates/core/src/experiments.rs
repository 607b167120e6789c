//! Random deployments, metrics recovered from traces, and batch statistics.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    base_chain_complete, expanded_sigma, stretch_of, Configuration, EngineError, MovementPolicy,
    RunMode, RunOutcome, RunStatus, SchedulerPolicy, Simulation, TraceRecord, INITIAL_SIGMA,
};
use crate::geometry::Point;
use crate::protocol::{Color, ProtocolParams, Robot, EPS_POS};
use crate::visibility::{
    is_visible_sampled, surviving_arc, VisibilityError, VisibilityModel, EPS_ARC,
};

/// Consecutive rejected candidates before placement gives up.
pub const MAX_REJECTIONS: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ExperimentError {
    #[error("invalid deployment: {0}")]
    InvalidSpec(String),
    #[error("placed only {placed} of {n} robots before giving up")]
    PlacementExhausted { placed: usize, n: usize },
    #[error("leader-election metrics need a leader-only trace")]
    ModeMismatch,
    #[error("trace does not start with a header")]
    MissingHeader,
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// An `n`-robot deployment, uniform in a `width` × `height` rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeploymentSpec {
    pub n: usize,
    pub width: f64,
    pub height: f64,
    pub camera_radius: f64,
    pub seed: u64,
}

impl DeploymentSpec {
    pub fn new(
        n: usize,
        width: f64,
        height: f64,
        camera_radius: f64,
        seed: u64,
    ) -> Result<Self, ExperimentError> {
        let spec = DeploymentSpec {
            n,
            width,
            height,
            camera_radius,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Rectangle of area `n / density` with width:height = `aspect`.
    pub fn from_density(
        n: usize,
        density: f64,
        aspect: f64,
        camera_radius: f64,
        seed: u64,
    ) -> Result<Self, ExperimentError> {
        if !(density > 0.0 && aspect > 0.0) {
            return Err(ExperimentError::InvalidSpec(format!(
                "density {density} and aspect {aspect} must be positive"
            )));
        }
        let area = n as f64 / density;
        Self::new(
            n,
            (area * aspect).sqrt(),
            (area / aspect).sqrt(),
            camera_radius,
            seed,
        )
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidSpec(m));
        if self.n == 0 {
            return bad("no robots".into());
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad(format!("rectangle {} x {}", self.width, self.height));
        }
        if !(self.camera_radius > 0.0 && self.camera_radius < 1.0) {
            return bad(format!("camera radius {}", self.camera_radius));
        }
        if self.area() < self.n as f64 * PI {
            return bad(format!("area {} below n·π for n = {}", self.area(), self.n));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn density(&self) -> f64 {
        self.n as f64 / self.area()
    }

    pub fn aspect(&self) -> f64 {
        self.width / self.height
    }

    /// Protocol parameters with the width bound set to the rectangle width.
    pub fn params(&self) -> ProtocolParams {
        ProtocolParams::new(self.width, self.camera_radius)
    }
}

/// Rejection sampling: candidates within 2 of an accepted centre are
/// redrawn.
pub fn generate_points(
    spec: &DeploymentSpec,
    rng: &mut impl Rng,
) -> Result<Vec<Point>, ExperimentError> {
    spec.validate()?;
    let mut pts: Vec<Point> = Vec::with_capacity(spec.n);
    let mut rejected = 0;
    while pts.len() < spec.n {
        let q = Point::new(
            rng.gen_range(0.0..spec.width),
            rng.gen_range(0.0..spec.height),
        );
        if pts.iter().all(|p| p.dist(q) >= 2.0) {
            pts.push(q);
            rejected = 0;
        } else {
            rejected += 1;
            if rejected >= MAX_REJECTIONS {
                return Err(ExperimentError::PlacementExhausted {
                    placed: pts.len(),
                    n: spec.n,
                });
            }
        }
    }
    Ok(pts)
}

pub fn generate_config(
    spec: &DeploymentSpec,
    rng: &mut impl Rng,
) -> Result<Configuration, ExperimentError> {
    let pts = generate_points(spec, rng)?;
    let model = VisibilityModel::new(spec.camera_radius)
        .map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?;
    Ok(Configuration::new(&pts, model, spec.params())?)
}

/// The configuration a seeded deployment always produces.
pub fn seeded_config(spec: &DeploymentSpec) -> Result<Configuration, ExperimentError> {
    generate_config(spec, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    #[serde(rename = "T1")]
    pub t1: Option<u64>,
    #[serde(rename = "T2")]
    pub t2: Option<u64>,
    #[serde(rename = "T3")]
    pub t3: Option<u64>,
    pub epochs: u64,
    /// Southward moves by `off` robots that were not globally southmost.
    pub m: u64,
    /// Epochs until all but one robot show `defeated` (leader-only runs).
    pub r: Option<u64>,
    pub expansions: u64,
    pub total_distance: f64,
    pub final_width: f64,
    pub final_height: f64,
    pub stretch_history: Vec<f64>,
}

/// Column names for the scalar metrics, in CSV order.
pub const METRIC_NAMES: [&str; 10] = [
    "T1",
    "T2",
    "T3",
    "epochs",
    "m",
    "r",
    "expansions",
    "total_distance",
    "final_width",
    "final_height",
];

impl RunMetrics {
    pub fn value(&self, name: &str) -> Option<f64> {
        let int = |v: Option<u64>| v.map(|x| x as f64);
        match name {
            "T1" => int(self.t1),
            "T2" => int(self.t2),
            "T3" => int(self.t3),
            "epochs" => Some(self.epochs as f64),
            "m" => Some(self.m as f64),
            "r" => int(self.r),
            "expansions" => Some(self.expansions as f64),
            "total_distance" => Some(self.total_distance),
            "final_width" => Some(self.final_width),
            "final_height" => Some(self.final_height),
            _ => None,
        }
    }

    pub fn final_stretch(&self) -> Option<f64> {
        self.stretch_history.last().copied()
    }
}

/// Replays a trace and recomputes every metric from the recorded moves.
///
/// Asking for `LeaderOnly` metrics (which include `r`) from a full-run
/// trace is an error.
pub fn collect_metrics(
    records: &[TraceRecord],
    want: RunMode,
) -> Result<RunMetrics, ExperimentError> {
    let Some(TraceRecord::Header(header)) = records.first() else {
        return Err(ExperimentError::MissingHeader);
    };
    if want == RunMode::LeaderOnly && header.mode != RunMode::LeaderOnly {
        return Err(ExperimentError::ModeMismatch);
    }
    let full = header.mode == RunMode::Full;
    let mut robots: Vec<Robot> = header.robots.clone();
    let n = robots.len();
    let mut out = RunMetrics::default();
    let mut before = robots.clone();
    let mut seen = vec![false; n];
    let mut leader: Option<usize> = None;
    let mut sigma = INITIAL_SIGMA;

    for rec in &records[1..] {
        match rec {
            TraceRecord::Header(_) => {
                return Err(ExperimentError::MalformedTrace("second header".into()))
            }
            TraceRecord::Event(e) => {
                let dist = e.from.dist(e.to);
                out.total_distance += dist;
                let lower = before
                    .iter()
                    .enumerate()
                    .any(|(j, r)| j != e.robot && r.position.y < e.from.y - EPS_POS);
                if e.color_before == Color::Off && dist > 0.0 && e.to.y < e.from.y && lower {
                    out.m += 1;
                }
                if e.color_before == Color::Leader && e.color_after == Color::Expand {
                    out.expansions += 1;
                    sigma = expanded_sigma(sigma);
                    out.stretch_history.push(stretch_of(sigma));
                }
                if e.activated {
                    seen[e.robot] = true;
                }
                robots[e.robot] = Robot::new(e.to, e.color_after);
            }
            TraceRecord::Round(s) => {
                let round = s.round;
                if seen.iter().all(|&b| b) {
                    out.epochs += 1;
                    seen.iter_mut().for_each(|b| *b = false);
                }
                let defeated = robots.iter().filter(|r| r.color == Color::Defeated).count();
                if out.r.is_none() && n > 1 && defeated + 1 >= n {
                    out.r = Some(out.epochs + u64::from(seen.iter().any(|&b| b)));
                }
                if leader.is_none() {
                    leader = robots
                        .iter()
                        .position(|r| matches!(r.color, Color::Leader | Color::Expand));
                    if leader.is_some() {
                        out.t1 = Some(round);
                        out.stretch_history.push(stretch_of(INITIAL_SIGMA));
                        if n == 1 {
                            out.t2 = Some(round);
                            out.t3 = Some(round);
                        }
                    }
                }
                if let (Some(l), true) = (leader, full) {
                    if out.t2.is_none() && base_chain_complete(&robots, l) {
                        out.t2 = Some(round);
                    }
                    if out.t3.is_none() && robots.iter().all(|r| r.color == Color::Final) {
                        out.t3 = Some(round);
                        out.t2.get_or_insert(round);
                    }
                }
                before.clone_from(&robots);
            }
        }
    }
    // Only meaningful when the leader is hidden from the others.
    if full {
        out.r = None;
    }
    let extent = |f: fn(&Point) -> f64| {
        let vals = robots.iter().map(|r| f(&r.position));
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
        hi - lo
    };
    out.final_width = extent(|p| p.x);
    out.final_height = extent(|p| p.y);
    Ok(out)
}

/// Everything that determines one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSetup {
    pub deployment: DeploymentSpec,
    pub scheduler: SchedulerPolicy,
    pub movement: MovementPolicy,
    pub mode: RunMode,
    /// Overrides the width bound taken from the rectangle; `Some(None)`
    /// selects the practical threshold of 10.
    pub width_bound: Option<Option<f64>>,
    pub max_rounds: u64,
}

impl RunSetup {
    pub fn new(
        deployment: DeploymentSpec,
        scheduler: SchedulerPolicy,
        movement: MovementPolicy,
        mode: RunMode,
    ) -> Self {
        RunSetup {
            deployment,
            scheduler,
            movement,
            mode,
            width_bound: None,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }

    pub fn config(&self) -> Result<Configuration, ExperimentError> {
        let mut cfg = seeded_config(&self.deployment)?;
        let c = self.deployment.camera_radius;
        cfg.params = match self.width_bound {
            None => cfg.params,
            Some(Some(d)) => ProtocolParams::new(d, c),
            Some(None) => ProtocolParams::practical(c),
        };
        Ok(cfg)
    }
}

pub const DEFAULT_MAX_ROUNDS: u64 = 200_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub outcome: RunOutcome,
    pub metrics: RunMetrics,
}

impl RunResult {
    pub fn succeeded(&self) -> bool {
        self.outcome.status == RunStatus::Completed
    }
}

/// Runs a configuration to the end, handing every trace record to `sink`,
/// and derives the metrics from those same records.
pub fn run_config(
    config: Configuration,
    scheduler: SchedulerPolicy,
    movement: MovementPolicy,
    mode: RunMode,
    max_rounds: u64,
    mut sink: impl FnMut(&TraceRecord),
) -> Result<RunResult, ExperimentError> {
    let mut sim = Simulation::new(config, scheduler, movement, mode)?;
    let mut records = vec![TraceRecord::Header(sim.header())];
    sink(&records[0]);
    let outcome = sim.run(max_rounds, |rec| {
        for e in &rec.events {
            let r = TraceRecord::Event(*e);
            sink(&r);
            records.push(r);
        }
        let r = TraceRecord::Round(rec.summary.clone());
        sink(&r);
        records.push(r);
    });
    let metrics = collect_metrics(&records, mode)?;
    Ok(RunResult { outcome, metrics })
}

pub fn run_setup(setup: &RunSetup) -> Result<RunResult, ExperimentError> {
    run_config(
        setup.config()?,
        setup.scheduler,
        setup.movement,
        setup.mode,
        setup.max_rounds,
        |_| {},
    )
}

/// Runs independent setups in parallel; results keep the input order.
pub fn run_batch(setups: &[RunSetup]) -> Vec<Result<RunResult, ExperimentError>> {
    setups.par_iter().map(run_setup).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Some(Stat {
            count,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            stddev: var.sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<RunMetrics>,
    /// Per metric, over the runs where it is defined.
    pub stats: BTreeMap<String, Stat>,
}

pub fn aggregate(runs: &[RunMetrics]) -> Summary {
    let stats = METRIC_NAMES
        .iter()
        .filter_map(|&name| {
            let vals: Vec<f64> = runs.iter().filter_map(|r| r.value(name)).collect();
            Stat::of(&vals).map(|s| (name.to_string(), s))
        })
        .collect();
    Summary {
        rows: runs.to_vec(),
        stats,
    }
}

/// Camera radii drawn by the oracle cross-check.
pub const ORACLE_CAMERA_RADII: [f64; 4] = [0.25, 0.5, 0.75, 0.9];

/// An ordered pair on which the two visibility oracles disagree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub trial: u64,
    pub camera_radius: f64,
    pub centers: Vec<Point>,
    pub observer: usize,
    pub target: usize,
    pub analytic: bool,
    pub sampled: bool,
    pub surviving_measure: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub trials: u64,
    pub pairs: u64,
    /// Pairs whose surviving arc is positive but within `10 * EPS_ARC` of zero.
    pub boundary_pairs: u64,
    pub compared: u64,
    pub agreed: u64,
    pub disagreements: Vec<Disagreement>,
}

impl OracleReport {
    /// Agreement over the compared pairs; vacuously 1.
    pub fn agreement(&self) -> f64 {
        if self.compared == 0 {
            1.0
        } else {
            self.agreed as f64 / self.compared as f64
        }
    }

    fn merge(mut self, o: OracleReport) -> OracleReport {
        self.trials += o.trials;
        self.pairs += o.pairs;
        self.boundary_pairs += o.boundary_pairs;
        self.compared += o.compared;
        self.agreed += o.agreed;
        self.disagreements.extend(o.disagreements);
        self
    }
}

/// A random spaced configuration for the oracle cross-check. The square
/// grows with `n` so that typical layouts have some occlusion but still fit.
pub fn oracle_trial_config(n: usize, rng: &mut impl Rng) -> (Vec<Point>, f64) {
    let side = 4.0 + 4.0 * (n as f64).sqrt();
    let c = ORACLE_CAMERA_RADII[rng.gen_range(0..ORACLE_CAMERA_RADII.len())];
    let mut pts: Vec<Point> = Vec::with_capacity(n);
    while pts.len() < n {
        let q = Point::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side));
        if pts.iter().all(|p| p.dist(q) >= 2.0) {
            pts.push(q);
        }
    }
    (pts, c)
}

/// Compares the analytic and sampled oracles on every ordered pair of
/// `trials` random configurations. Trial `k` is seeded by `seed + k`.
pub fn cross_validate_oracles(
    trials: u64,
    robots: (usize, usize),
    samples: usize,
    seed: u64,
) -> Result<OracleReport, VisibilityError> {
    let (lo, hi) = robots;
    assert!(
        lo >= 2 && lo <= hi,
        "robot range must satisfy 2 <= min <= max"
    );
    let reports = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial));
            let n = rng.gen_range(lo..=hi);
            let (centers, c) = oracle_trial_config(n, &mut rng);
            let model = VisibilityModel::new(c)?;
            let mut rep = OracleReport {
                trials: 1,
                ..Default::default()
            };
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    rep.pairs += 1;
                    let measure = surviving_arc(i, j, &centers, &model).measure();
                    if measure > 0.0 && measure < 10.0 * EPS_ARC {
                        rep.boundary_pairs += 1;
                        continue;
                    }
                    rep.compared += 1;
                    let analytic = measure > EPS_ARC;
                    let sampled = is_visible_sampled(i, j, &centers, &model, samples, rng.gen())?;
                    if analytic == sampled {
                        rep.agreed += 1;
                    } else {
                        rep.disagreements.push(Disagreement {
                            trial,
                            camera_radius: c,
                            centers: centers.clone(),
                            observer: i,
                            target: j,
                            analytic,
                            sampled,
                            surviving_measure: measure,
                        });
                    }
                }
            }
            Ok(rep)
        })
        .collect::<Result<Vec<_>, VisibilityError>>()?;
    Ok(reports
        .into_iter()
        .fold(OracleReport::default(), OracleReport::merge))
}
