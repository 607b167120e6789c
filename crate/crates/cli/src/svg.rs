//! Snapshot rendering and trace replay for `render`.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::Deserialize;
use swarmvis::engine::{TraceHeader, TraceRecord};
use swarmvis::protocol::{Color, Robot};
use thiserror::Error;

use crate::spec::FORMAT_VERSION;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("round {round} is out of range: the trace ends at round {last}")]
    RoundOutOfRange { round: u64, last: u64 },
    #[error("trace does not start with a header")]
    MissingHeader,
    #[error("trace line {line}: {source}")]
    Malformed {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A trace read back from JSONL.
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    pub last_round: u64,
}

impl Trace {
    pub fn read(input: impl BufRead) -> Result<Trace, RenderError> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut de = serde_json::Deserializer::from_str(&line);
            let rec =
                TraceRecord::deserialize(&mut de).map_err(|source| RenderError::Malformed {
                    line: i + 1,
                    source,
                })?;
            records.push(rec);
        }
        let Some(TraceRecord::Header(header)) = records.first().cloned() else {
            return Err(RenderError::MissingHeader);
        };
        let last_round = records
            .iter()
            .filter_map(|r| match r {
                TraceRecord::Round(s) => Some(s.round),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        Ok(Trace {
            header,
            records,
            last_round,
        })
    }

    /// Robot states after `round` (round 0 is the initial configuration).
    pub fn state_at(&self, round: u64) -> Result<Vec<Robot>, RenderError> {
        if round > self.last_round {
            return Err(RenderError::RoundOutOfRange {
                round,
                last: self.last_round,
            });
        }
        let mut robots = self.header.robots.clone();
        for rec in &self.records {
            if let TraceRecord::Event(e) = rec {
                if e.round > round {
                    break;
                }
                robots[e.robot] = Robot::new(e.to, e.color_after);
            }
        }
        Ok(robots)
    }
}

pub fn fill(color: Color) -> &'static str {
    match color {
        Color::Off => "#9e9e9e",
        Color::Defeated => "#5d4037",
        Color::Leader => "#d32f2f",
        Color::Subordinate => "#1976d2",
        Color::NoSpace => "#f57c00",
        Color::Expand => "#7b1fa2",
        Color::Final => "#388e3c",
    }
}

const MARGIN: f64 = 3.0;
const LEGEND_WIDTH: f64 = 12.0;

/// An SVG snapshot: unit bodies, camera circles, a colour legend and, when
/// a leader is present, the horizontal lines L0 to L10 of its frame.
pub fn render(robots: &[Robot], camera_radius: f64, round: u64) -> String {
    let leader = robots
        .iter()
        .find(|r| matches!(r.color, Color::Leader | Color::Expand))
        .map(|r| r.position);
    let mut xs: Vec<f64> = robots.iter().map(|r| r.position.x).collect();
    let mut ys: Vec<f64> = robots.iter().map(|r| r.position.y).collect();
    if let Some(l) = leader {
        ys.push(l.y + 10.0);
        xs.push(l.x);
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1) = (min(&xs) - 1.0 - MARGIN, max(&xs) + 1.0 + MARGIN);
    let (y0, y1) = (min(&ys) - 1.0 - MARGIN, max(&ys) + 1.0 + MARGIN);
    let legend_height = 1.5 * Color::ALL.len() as f64 + 1.0;
    let (w, h) = (x1 - x0 + LEGEND_WIDTH, (y1 - y0).max(legend_height));
    // The plane's y axis points up, SVG's points down.
    let sy = |y: f64| y1 - y;
    let sx = |x: f64| x - x0;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w:.3} {h:.3}" data-format-version="{FORMAT_VERSION}" data-round="{round}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(l) = leader {
        for k in 0..=10 {
            let y = sy(l.y + k as f64);
            let _ = writeln!(
                out,
                r##"<line class="grid" x1="0" y1="{y:.4}" x2="{:.4}" y2="{y:.4}" stroke="#cccccc" stroke-width="0.05"/>"##,
                x1 - x0
            );
            let _ = writeln!(
                out,
                r##"<text x="0.2" y="{:.4}" font-size="0.6" fill="#888888">L{k}</text>"##,
                y - 0.1
            );
        }
    }
    for r in robots {
        let (cx, cy) = (sx(r.position.x), sy(r.position.y));
        let _ = writeln!(
            out,
            r##"<circle class="robot" cx="{cx:.4}" cy="{cy:.4}" r="1" fill="{}" fill-opacity="0.8" stroke="#222222" stroke-width="0.05"/>"##,
            fill(r.color)
        );
        let _ = writeln!(
            out,
            r##"<circle class="camera" cx="{cx:.4}" cy="{cy:.4}" r="{camera_radius}" fill="none" stroke="#ffffff" stroke-width="0.05"/>"##
        );
    }
    let lx = x1 - x0 + 1.0;
    for (k, c) in Color::ALL.iter().enumerate() {
        let y = 1.0 + 1.5 * k as f64;
        let _ = writeln!(
            out,
            r##"<circle class="legend" cx="{:.4}" cy="{:.4}" r="0.5" fill="{}" stroke="#222222" stroke-width="0.05"/>"##,
            lx + 0.5,
            y + 0.5,
            fill(*c)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.4}" y="{:.4}" font-size="0.8">{}</text>"#,
            lx + 1.5,
            y + 0.8,
            c.name()
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use swarmvis::geometry::Point;

    fn robots(cs: &[(f64, f64, Color)]) -> Vec<Robot> {
        cs.iter()
            .map(|&(x, y, c)| Robot::new(Point::new(x, y), c))
            .collect()
    }

    #[test]
    fn one_circle_pair_per_robot_and_a_full_legend() {
        let svg = render(
            &robots(&[(0.0, 0.0, Color::Off), (5.0, 3.0, Color::Off)]),
            0.5,
            0,
        );
        assert_eq!(svg.matches(r#"class="robot""#).count(), 2);
        assert_eq!(svg.matches(r#"class="camera""#).count(), 2);
        assert_eq!(svg.matches(r#"class="legend""#).count(), 7);
        assert!(svg.contains(r#"r="0.5""#));
        assert!(!svg.contains(r#"class="grid""#));
        assert!(svg.contains(r#"data-format-version="1""#));
    }

    #[test]
    fn gridlines_follow_the_leader() {
        let rs = robots(&[(0.0, -20.0, Color::Leader), (4.0, 0.0, Color::Subordinate)]);
        let svg = render(&rs, 0.5, 9);
        assert_eq!(svg.matches(r#"class="grid""#).count(), 11);
        assert!(svg.contains(">L0<") && svg.contains(">L10<"));
    }

    #[test]
    fn output_is_deterministic() {
        let rs = robots(&[(0.0, -20.0, Color::Leader), (4.0, 0.0, Color::Final)]);
        assert_eq!(render(&rs, 0.25, 3), render(&rs, 0.25, 3));
    }
}
