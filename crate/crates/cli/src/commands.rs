use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use swarmvis::engine::{Monitors, PhaseMarkers, RunMode, RunStatus, TraceRecord};
use swarmvis::experiments::{
    aggregate, cross_validate_oracles, run_config, seeded_config, DeploymentSpec, ExperimentError,
    OracleReport, RunMetrics, RunResult, Stat, METRIC_NAMES,
};
use swarmvis::geometry::Point;
use swarmvis::protocol::Robot;
use swarmvis::visibility::{is_visible_sampled, surviving_arc, VisibilityModel, EPS_ARC};

use crate::spec::{DeploymentFile, RunSpecFile, FORMAT_VERSION};
use crate::svg::{self, Trace};
use crate::{BatchArgs, Done, GenerateArgs, RenderArgs, SimulateArgs, VerifyArgs};

/// Writes to a sibling temporary file first so readers never see half a file.
fn write_atomically(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, contents).with_context(|| format!("cannot write {}", path.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))
}

fn emit(out: Option<&Path>, contents: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomically(p, contents),
        None => Ok(io::stdout().write_all(contents)?),
    }
}

fn status_name(status: &RunStatus) -> &'static str {
    match status {
        RunStatus::Completed => "completed",
        RunStatus::SafetyViolation { .. } => "safety_violation",
        RunStatus::LivelockSuspected { .. } => "livelock_suspected",
        RunStatus::RoundLimit { .. } => "round_limit",
    }
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    format_version: u32,
    mode: RunMode,
    #[serde(flatten)]
    status: &'a RunStatus,
    rounds: u64,
    seeds: Seeds,
    #[serde(flatten)]
    metrics: &'a RunMetrics,
    markers: PhaseMarkers,
    monitors: &'a Monitors,
}

#[derive(Serialize)]
struct Seeds {
    #[serde(skip_serializing_if = "Option::is_none")]
    deployment: Option<u64>,
    scheduler: u64,
    movement: u64,
}

/// Keeps the robot states current while a trace streams past, so that
/// snapshots can be taken without storing the trace.
struct Snapshots<'a> {
    dir: &'a Path,
    every: u64,
    camera_radius: f64,
    robots: Vec<Robot>,
}

impl Snapshots<'_> {
    fn write(&self, round: u64) -> Result<()> {
        let path = self.dir.join(format!("round_{round:07}.svg"));
        fs::write(&path, svg::render(&self.robots, self.camera_radius, round))
            .with_context(|| format!("cannot write {}", path.display()))
    }

    fn observe(&mut self, rec: &TraceRecord) -> Result<()> {
        match rec {
            TraceRecord::Header(h) => {
                self.robots = h.robots.clone();
                self.write(0)
            }
            TraceRecord::Event(e) => {
                self.robots[e.robot] = Robot::new(e.to, e.color_after);
                Ok(())
            }
            TraceRecord::Round(s) if s.round % self.every == 0 => self.write(s.round),
            TraceRecord::Round(_) => Ok(()),
        }
    }
}

pub fn simulate(a: SimulateArgs) -> Result<Done> {
    let spec = RunSpecFile::load(&a.spec)?;
    let prep = spec.prepare(0, a.run.width_bound)?;
    let mut trace = match &a.trace {
        Some(p) => Some(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => None,
    };
    let mut snaps = match (&a.svg_dir, a.svg_every) {
        (Some(dir), Some(every)) => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            Some(Snapshots {
                dir,
                every,
                camera_radius: spec.c,
                robots: Vec::new(),
            })
        }
        _ => None,
    };
    // The sink cannot return errors, so keep the first one for later.
    let mut failure: Option<anyhow::Error> = None;
    let result = run_config(
        prep.config,
        prep.scheduler,
        prep.movement,
        prep.mode,
        a.run.max_rounds,
        |rec| {
            if failure.is_some() {
                return;
            }
            if let Some(w) = trace.as_mut() {
                let line = serde_json::to_writer(&mut *w, rec)
                    .map_err(anyhow::Error::from)
                    .and_then(|_| Ok(w.write_all(b"\n")?));
                if let Err(e) = line {
                    failure = Some(e.context("cannot write trace"));
                    return;
                }
            }
            if let Some(s) = snaps.as_mut() {
                if let Err(e) = s.observe(rec) {
                    failure = Some(e);
                }
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(mut w) = trace {
        w.flush().context("cannot write trace")?;
    }
    let RunResult { outcome, metrics } = &result;
    if let Some(path) = &a.metrics {
        let file = MetricsFile {
            format_version: FORMAT_VERSION,
            mode: prep.mode,
            status: &outcome.status,
            rounds: outcome.rounds,
            seeds: Seeds {
                deployment: spec.deployment.map(|d| d.seed),
                scheduler: prep.scheduler.seed,
                movement: prep.movement.seed,
            },
            metrics,
            markers: outcome.markers,
            monitors: &outcome.monitors,
        };
        write_atomically(path, &serde_json::to_vec_pretty(&file)?)?;
    }
    let show = |t: Option<u64>| t.map_or("-".to_string(), |v| v.to_string());
    println!(
        "{} after {} rounds: T1 {} T2 {} T3 {}, {} epochs, {} expansions, distance {:.3}",
        status_name(&outcome.status),
        outcome.rounds,
        show(metrics.t1),
        show(metrics.t2),
        show(metrics.t3),
        metrics.epochs,
        metrics.expansions,
        metrics.total_distance
    );
    Ok(if result.succeeded() {
        Done::Success
    } else {
        Done::RunFailed
    })
}

fn error_status(e: &ExperimentError) -> &'static str {
    match e {
        ExperimentError::PlacementExhausted { .. } => "placement_exhausted",
        _ => "error",
    }
}

/// Thread cap for batch work from `SWARMVIS_THREADS`; 0 or unset means no cap.
fn thread_cap() -> Result<usize> {
    match std::env::var("SWARMVIS_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("SWARMVIS_THREADS must be a whole number, got {v:?}")),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(e.into()),
    }
}

pub fn batch(a: BatchArgs) -> Result<Done> {
    let spec = RunSpecFile::load(&a.spec)?;
    let Some(DeploymentFile { n, seed, .. }) = spec.deployment else {
        bail!("batch needs a spec with a deployment");
    };
    spec.deployment_spec(0)?.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap()?)
        .build()?;
    let results: Vec<Result<RunResult, ExperimentError>> = pool.install(|| {
        (0..a.runs)
            .into_par_iter()
            .map(|k| {
                let prep = spec.prepare(k, a.run.width_bound).map_err(|e| {
                    e.downcast::<ExperimentError>()
                        .unwrap_or_else(|e| ExperimentError::InvalidSpec(format!("{e:#}")))
                })?;
                run_config(
                    prep.config,
                    prep.scheduler,
                    prep.movement,
                    prep.mode,
                    a.run.max_rounds,
                    |_| {},
                )
            })
            .collect()
    });

    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run", "seed", "n"];
    header.extend(METRIC_NAMES);
    header.extend(["status", "format_version"]);
    csv.write_record(&header)?;
    let mut failed = 0;
    for (k, r) in results.iter().enumerate() {
        let mut row = vec![
            k.to_string(),
            seed.wrapping_add(k as u64).to_string(),
            n.to_string(),
        ];
        let (metrics, status) = match r {
            Ok(res) => (Some(&res.metrics), status_name(&res.outcome.status)),
            Err(e) => (None, error_status(e)),
        };
        if status != "completed" {
            failed += 1;
        }
        for name in METRIC_NAMES {
            row.push(
                metrics
                    .and_then(|m| m.value(name))
                    .map_or(String::new(), |v| v.to_string()),
            );
        }
        row.push(status.to_string());
        row.push(FORMAT_VERSION.to_string());
        csv.write_record(&row)?;
    }
    emit(a.out.as_deref(), &csv.into_inner()?)?;

    if let Some(path) = &a.summary {
        let rows: Vec<RunMetrics> = results
            .iter()
            .flatten()
            .map(|r| r.metrics.clone())
            .collect();
        #[derive(Serialize)]
        struct SummaryFile {
            format_version: u32,
            runs: u64,
            failed: usize,
            stats: std::collections::BTreeMap<String, Stat>,
        }
        let summary = SummaryFile {
            format_version: FORMAT_VERSION,
            runs: a.runs,
            failed,
            stats: if rows.is_empty() {
                Default::default()
            } else {
                aggregate(&rows).stats
            },
        };
        write_atomically(path, &serde_json::to_vec_pretty(&summary)?)?;
    }
    if failed > 0 {
        eprintln!("{failed} of {} runs did not complete", a.runs);
        return Ok(Done::RunFailed);
    }
    Ok(Done::Success)
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    format_version: u32,
    seed: u64,
    samples: usize,
    agreement: f64,
    #[serde(flatten)]
    report: &'a OracleReport,
}

/// One configuration to check pair by pair. Dumped disagreements have this
/// shape (plus extra fields, which are ignored).
#[derive(Deserialize)]
struct Fixture {
    camera_radius: f64,
    centers: Vec<Point>,
}

pub fn verify_visibility(a: VerifyArgs) -> Result<Done> {
    if a.samples < 8 {
        bail!("--samples must be at least 8");
    }
    if let Some(path) = &a.fixture {
        return verify_fixture(path, a.samples, a.seed);
    }
    if a.robots_min < 2 || a.robots_min > a.robots_max {
        bail!("need 2 <= --robots-min <= --robots-max");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap()?)
        .build()?;
    let report = pool.install(|| {
        cross_validate_oracles(a.trials, (a.robots_min, a.robots_max), a.samples, a.seed)
    })?;
    println!(
        "agreement {:.4}% over {} compared pairs ({} pairs in {} trials, {} boundary pairs excluded)",
        100.0 * report.agreement(),
        report.compared,
        report.pairs,
        report.trials,
        report.boundary_pairs
    );
    let full = VerifyReport {
        format_version: FORMAT_VERSION,
        seed: a.seed,
        samples: a.samples,
        agreement: report.agreement(),
        report: &report,
    };
    let json = serde_json::to_vec_pretty(&full)?;
    match &a.out {
        Some(p) => write_atomically(p, &json)?,
        None if !report.disagreements.is_empty() => {
            for d in &report.disagreements {
                println!("{}", serde_json::to_string(d)?);
            }
        }
        None => {}
    }
    Ok(if report.disagreements.is_empty() {
        Done::Success
    } else {
        Done::RunFailed
    })
}

fn verify_fixture(path: &Path, samples: usize, seed: u64) -> Result<Done> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let f: Fixture =
        serde_json::from_str(&text).with_context(|| format!("in {}", path.display()))?;
    let model = VisibilityModel::new(f.camera_radius)?;
    let n = f.centers.len();
    let mut disagreements = 0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let measure = surviving_arc(i, j, &f.centers, &model).measure();
            let analytic = measure > EPS_ARC;
            let sampled = is_visible_sampled(i, j, &f.centers, &model, samples, seed)?;
            let boundary = measure > 0.0 && measure < 10.0 * EPS_ARC;
            let note = match (analytic == sampled, boundary) {
                (true, _) => "",
                (false, true) => "  (boundary, ignored)",
                (false, false) => {
                    disagreements += 1;
                    "  DISAGREE"
                }
            };
            println!(
                "{i} -> {j}: analytic {analytic}, sampled {sampled}, surviving arc {:.3e}{note}",
                measure.max(0.0) + 0.0
            );
        }
    }
    Ok(if disagreements == 0 {
        Done::Success
    } else {
        Done::RunFailed
    })
}

pub fn generate(a: GenerateArgs) -> Result<Done> {
    let dep = match (a.width, a.height, a.density) {
        (Some(w), Some(h), _) => DeploymentSpec::new(a.n, w, h, a.c, a.seed)?,
        (_, _, Some(rho)) => DeploymentSpec::from_density(a.n, rho, a.aspect, a.c, a.seed)?,
        _ => bail!("give --width and --height, or --density"),
    };
    let pts: Vec<Point> = seeded_config(&dep)?.centers();
    let spec = RunSpecFile {
        format_version: Some(FORMAT_VERSION),
        c: a.c,
        d: Some(dep.width),
        scheduler: Default::default(),
        movement: Default::default(),
        mode: Default::default(),
        robots: Some(pts.into_iter().map(Into::into).collect()),
        deployment: None,
    };
    let mut json = serde_json::to_vec_pretty(&spec)?;
    json.push(b'\n');
    emit(a.out.as_deref(), &json)?;
    Ok(Done::Success)
}

pub fn render(a: RenderArgs) -> Result<Done> {
    let file =
        File::open(&a.trace).with_context(|| format!("cannot read {}", a.trace.display()))?;
    let trace = Trace::read(BufReader::new(file))?;
    let round = a.round.unwrap_or(trace.last_round);
    let robots = trace.state_at(round)?;
    let svg = svg::render(&robots, trace.header.camera_radius, round);
    emit(a.out.as_deref(), svg.as_bytes())?;
    Ok(Done::Success)
}
