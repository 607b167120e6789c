//! The JSON run description accepted by `simulate` and `batch`.

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use swarmvis::engine::{
    Adversary, Configuration, MovementKind, MovementPolicy, RunMode, SchedulerMode, SchedulerPolicy,
};
use swarmvis::experiments::{seeded_config, DeploymentSpec};
use swarmvis::geometry::Point;
use swarmvis::protocol::ProtocolParams;
use swarmvis::visibility::VisibilityModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpecFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_version: Option<u32>,
    pub c: f64,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default)]
    pub scheduler: SchedulerSpec,
    #[serde(default)]
    pub movement: MovementSpec,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robots: Option<Vec<Xy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployment: Option<DeploymentFile>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Xy {
    pub x: f64,
    pub y: f64,
}

impl From<Xy> for Point {
    fn from(p: Xy) -> Point {
        Point::new(p.x, p.y)
    }
}

impl From<Point> for Xy {
    fn from(p: Point) -> Xy {
        Xy { x: p.x, y: p.y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSpec {
    pub mode: SchedulerMode,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SchedulerSpec {
    fn default() -> Self {
        SchedulerSpec {
            mode: SchedulerMode::Fsync,
            p: 1.0,
            seed: 0,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn always_delta() -> Adversary {
    Adversary::AlwaysDelta
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovementSpec {
    pub kind: MovementKind,
    #[serde(default = "two")]
    pub delta: f64,
    #[serde(default = "always_delta")]
    pub adversary: Adversary,
    #[serde(default)]
    pub seed: u64,
}

impl Default for MovementSpec {
    fn default() -> Self {
        MovementSpec {
            kind: MovementKind::Rigid,
            delta: 2.0,
            adversary: Adversary::AlwaysDelta,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSpec {
    #[default]
    Full,
    LeaderOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentFile {
    pub n: usize,
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Where the known width bound D comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum WidthBound {
    /// `D` from the file, else the deployment width, else the bounding width.
    #[default]
    Auto,
    /// The horizontal extent of the actual initial configuration.
    Bounding,
    /// No bound: the leader separates by 10.
    Practical,
}

/// Everything a run needs, resolved from a spec file.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: Configuration,
    pub scheduler: SchedulerPolicy,
    pub movement: MovementPolicy,
    pub mode: RunMode,
}

impl RunSpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: RunSpecFile = serde_json::from_str(text).context("invalid run spec")?;
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    fn check(&self) -> Result<()> {
        if let Some(v) = self.format_version {
            if v != FORMAT_VERSION {
                bail!("unsupported format_version {v}, expected {FORMAT_VERSION}");
            }
        }
        match (&self.robots, &self.deployment) {
            (Some(_), Some(_)) => bail!("give either robots or deployment, not both"),
            (None, None) => bail!("one of robots or deployment is required"),
            _ => {}
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            bail!("c must lie in (0, 1), got {}", self.c);
        }
        let p = self.scheduler.p;
        if self.scheduler.mode == SchedulerMode::Ssync && !(p > 0.0 && p <= 1.0) {
            bail!("scheduler.p must lie in (0, 1], got {p}");
        }
        if self.movement.delta.is_nan() || self.movement.delta < 2.0 {
            bail!(
                "movement.delta must be at least 2, got {}",
                self.movement.delta
            );
        }
        if let Some(d) = self.d {
            if !(d.is_finite() && d >= 0.0) {
                bail!("D must be a non-negative number, got {d}");
            }
        }
        Ok(())
    }

    pub fn run_mode(&self) -> RunMode {
        match self.mode {
            ModeSpec::Full => RunMode::Full,
            ModeSpec::LeaderOnly => RunMode::LeaderOnly,
        }
    }

    /// The deployment with its seed shifted by `offset`.
    pub fn deployment_spec(&self, offset: u64) -> Result<DeploymentSpec> {
        let Some(d) = self.deployment else {
            bail!("a deployment is required here");
        };
        Ok(DeploymentSpec::new(
            d.n,
            d.width,
            d.height,
            self.c,
            d.seed.wrapping_add(offset),
        )?)
    }

    pub fn scheduler(&self, offset: u64) -> SchedulerPolicy {
        let s = &self.scheduler;
        SchedulerPolicy {
            mode: s.mode,
            activation_probability: if s.mode == SchedulerMode::Fsync {
                1.0
            } else {
                s.p
            },
            seed: s.seed.wrapping_add(offset),
        }
    }

    pub fn movement(&self, offset: u64) -> MovementPolicy {
        let m = &self.movement;
        MovementPolicy {
            kind: m.kind,
            delta: m.delta,
            adversary: m.adversary,
            seed: m.seed.wrapping_add(offset),
        }
    }

    /// Builds the configuration; every seed is shifted by `offset`.
    pub fn prepare(&self, offset: u64, bound: WidthBound) -> Result<Prepared> {
        let mut config = match (&self.robots, &self.deployment) {
            (Some(xy), _) => {
                let pts: Vec<Point> = xy.iter().map(|&p| p.into()).collect();
                let model = VisibilityModel::new(self.c)?;
                Configuration::new(&pts, model, ProtocolParams::practical(self.c))?
            }
            _ => seeded_config(&self.deployment_spec(offset)?)?,
        };
        let c = self.c;
        config.params = match bound {
            WidthBound::Practical => ProtocolParams::practical(c),
            WidthBound::Bounding => ProtocolParams::new(bounding_width(&config), c),
            WidthBound::Auto => match (self.d, self.deployment) {
                (Some(d), _) => ProtocolParams::new(d, c),
                (None, Some(dep)) => ProtocolParams::new(dep.width, c),
                (None, None) => ProtocolParams::new(bounding_width(&config), c),
            },
        };
        Ok(Prepared {
            config,
            scheduler: self.scheduler(offset),
            movement: self.movement(offset),
            mode: self.run_mode(),
        })
    }
}

fn bounding_width(config: &Configuration) -> f64 {
    let xs = config.robots.iter().map(|r| r.position.x);
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    hi - lo
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"c": 0.5, "robots": [{"x": 0, "y": 0}, {"x": 5, "y": 1}]}"#;

    #[test]
    fn defaults_fill_the_gaps() {
        let s = RunSpecFile::parse(MINIMAL).unwrap();
        assert_eq!(s.scheduler.mode, SchedulerMode::Fsync);
        assert_eq!(s.movement.kind, MovementKind::Rigid);
        assert_eq!(s.mode, ModeSpec::Full);
        let p = s.prepare(0, WidthBound::Auto).unwrap();
        assert_eq!(p.config.params.width_bound, Some(5.0));
        assert_eq!(p.config.params.separation_threshold, 10.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{"c": 0.5, "robots": [], "colour": "red"}"#;
        assert!(RunSpecFile::parse(bad).is_err());
        let nested = r#"{"c": 0.5, "robots": [], "scheduler": {"mode": "fsync", "q": 1}}"#;
        assert!(RunSpecFile::parse(nested).is_err());
        let robot = r#"{"c": 0.5, "robots": [{"x": 0, "y": 0, "z": 1}]}"#;
        assert!(RunSpecFile::parse(robot).is_err());
    }

    #[test]
    fn exactly_one_robot_source() {
        let both = r#"{"c": 0.5, "robots": [], "deployment": {"n": 3, "width": 20, "height": 20}}"#;
        assert!(RunSpecFile::parse(both).is_err());
        assert!(RunSpecFile::parse(r#"{"c": 0.5}"#).is_err());
        assert!(RunSpecFile::parse(r#"{"c": 1.5, "robots": []}"#).is_err());
        let lazy = r#"{"c": 0.5, "robots": [], "scheduler": {"mode": "ssync", "p": 0}}"#;
        assert!(RunSpecFile::parse(lazy).is_err());
        let short = r#"{"c": 0.5, "robots": [], "movement": {"kind": "nonrigid", "delta": 1}}"#;
        assert!(RunSpecFile::parse(short).is_err());
    }

    #[test]
    fn width_bound_sources() {
        let text =
            r#"{"c": 0.5, "D": 60, "deployment": {"n": 5, "width": 30, "height": 20, "seed": 4}}"#;
        let s = RunSpecFile::parse(text).unwrap();
        let auto = s.prepare(0, WidthBound::Auto).unwrap();
        assert_eq!(auto.config.params.width_bound, Some(60.0));
        assert!((auto.config.params.separation_threshold - 60.0 / 3f64.sqrt()).abs() < 1e-12);
        let practical = s.prepare(0, WidthBound::Practical).unwrap();
        assert_eq!(practical.config.params.width_bound, None);
        let bounding = s.prepare(0, WidthBound::Bounding).unwrap();
        let w = bounding.config.params.width_bound.unwrap();
        assert!(w > 0.0 && w <= 30.0);
    }

    #[test]
    fn offsets_shift_every_seed() {
        let text = r#"{"c": 0.5, "scheduler": {"mode": "ssync", "p": 0.5, "seed": 10},
            "movement": {"kind": "nonrigid", "seed": 20},
            "deployment": {"n": 4, "width": 20, "height": 20, "seed": 30}}"#;
        let s = RunSpecFile::parse(text).unwrap();
        let p = s.prepare(3, WidthBound::Auto).unwrap();
        assert_eq!(p.scheduler.seed, 13);
        assert_eq!(p.movement.seed, 23);
        assert_eq!(s.deployment_spec(3).unwrap().seed, 33);
        assert_eq!(p.movement.adversary, Adversary::AlwaysDelta);
        assert_eq!(p.scheduler.activation_probability, 0.5);
    }

    #[test]
    fn overlapping_robots_are_an_input_error() {
        let text = r#"{"c": 0.5, "robots": [{"x": 0, "y": 0}, {"x": 1, "y": 0}]}"#;
        let err = RunSpecFile::parse(text)
            .unwrap()
            .prepare(0, WidthBound::Auto)
            .unwrap_err();
        assert!(err.to_string().contains("pairwise distance < 2"), "{err}");
    }
}
