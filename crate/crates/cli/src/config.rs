//! Scenario files.
//!
//! A scenario is a TOML document with top-level `seed` and `rho`, and the
//! sections `[graph]`, `[delays]`, `[schedule]`, `[output]` and one
//! `[[units]]` table per node. Node labels are 1-based. Unknown keys are
//! rejected, and every error carries the line and column it refers to.
//! See `scenarios/six_lis.toml` for a complete example and the README for
//! the key reference.

use std::ops::Range;
use std::path::{Path, PathBuf};

use apportion_core::apportion::Bounds;
use apportion_core::netsim::{DelayModel, FixedDelays};
use apportion_core::scenario::{DemandProfile, DispatchSchedule, Fleet, LisUnit, PvProfile, Tracking, UnitKind};
use apportion_core::topology::Graph;
use apportion_core::NodeId;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

/// The built-in six-unit ring scenario.
pub const SIX_LIS: &str = include_str!("../scenarios/six_lis.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}:{column}: {message}")]
    Invalid {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rho")]
    pub rho: Spanned<f64>,
    pub graph: Spanned<GraphConfig>,
    #[serde(default)]
    pub delays: DelayConfig,
    pub schedule: Spanned<ScheduleConfig>,
    #[serde(default, skip_serializing_if = "OutputConfig::is_empty")]
    pub output: OutputConfig,
    pub units: Vec<Spanned<UnitConfig>>,
}

fn default_rho() -> Spanned<f64> {
    Spanned::new(0..0, 0.02)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
    /// Diameter bound handed to the nodes; defaults to the true diameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DelayKindConfig {
    Fixed,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    pub model: DelayKindConfig,
    pub tau_bar: u32,
    /// Fixed model: delay for every directed link not listed in `links`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fill: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<Spanned<LinkConfig>>,
    /// Per-link bounds tighter than `tau_bar`, applied to both directions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<Spanned<LinkConfig>>,
}

impl Default for DelayConfig {
    fn default() -> Self {
        Self {
            model: DelayKindConfig::Fixed,
            tau_bar: 0,
            fill: None,
            links: Vec::new(),
            bounds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub from: usize,
    pub to: usize,
    pub delay: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DemandConfig {
    Constant(f64),
    /// `[hours, watts]` steps, each holding until the next.
    Steps(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub demand: DemandConfig,
    pub demand_nodes: Vec<usize>,
    #[serde(default = "one")]
    pub consensus_period_s: f64,
    #[serde(default = "sixty")]
    pub dispatch_period_s: f64,
    #[serde(default = "one")]
    pub epsilon: f64,
    #[serde(default)]
    pub start_h: f64,
    #[serde(default = "eight")]
    pub end_h: f64,
}

fn one() -> f64 {
    1.0
}
fn sixty() -> f64 {
    60.0
}
fn eight() -> f64 {
    8.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

impl OutputConfig {
    fn is_empty(&self) -> bool {
        self.dir.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKindConfig {
    Dispatchable,
    Renewable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitConfig {
    pub id: usize,
    pub kind: UnitKindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    /// `[hours, watts]` breakpoints of the renewable output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<[f64; 2]>>,
    /// First-order tracking lag; instant tracking when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_constant_s: Option<f64>,
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub rho: f64,
    pub graph: Graph,
    pub fleet: Fleet,
    pub schedule: DispatchSchedule,
    pub delays: DelayModel,
    pub diameter: Option<u32>,
    pub out_dir: Option<PathBuf>,
}

struct Source<'a> {
    origin: &'a str,
    text: &'a str,
}

impl Source<'_> {
    fn error(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        let start = span.start.min(self.text.len());
        let before = &self.text[..start];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        ConfigError::Invalid {
            origin: self.origin.to_string(),
            line,
            column,
            message: message.into(),
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates `text`; `origin` names it in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let src = Source { origin, text };
        let config: Self = toml::from_str(text)
            .map_err(|e| src.error(e.span().unwrap_or(0..0), e.message().trim_end().to_string()))?;
        config.build_with(&src)?;
        Ok(config)
    }

    pub fn six_lis() -> Self {
        Self::parse(SIX_LIS, "six_lis.toml").expect("built-in scenario is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Builds the runnable scenario. Configs from [`ScenarioConfig::parse`]
    /// are already validated, so this only fails for hand-built ones.
    pub fn build(&self) -> Result<Scenario, ConfigError> {
        self.build_with(&Source {
            origin: "scenario",
            text: "",
        })
    }

    fn build_with(&self, src: &Source) -> Result<Scenario, ConfigError> {
        let g = self.graph.get_ref();
        let graph_span = self.graph.span();
        let label = |l: usize, span: Range<usize>| -> Result<usize, ConfigError> {
            if l == 0 || l > g.nodes {
                return Err(src.error(span, format!("node {l} is not in 1..={}", g.nodes)));
            }
            Ok(l - 1)
        };
        let mut edges = Vec::with_capacity(g.edges.len());
        for &[a, b] in &g.edges {
            edges.push((label(a, graph_span.clone())?, label(b, graph_span.clone())?));
        }
        let mut graph = Graph::new(g.nodes, &edges).map_err(|e| src.error(graph_span.clone(), e.to_string()))?;
        if !graph.is_connected() {
            return Err(src.error(graph_span, "graph is not connected"));
        }

        let rho = *self.rho.get_ref();
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(src.error(self.rho.span(), "rho must be a non-negative number"));
        }

        let d = &self.delays;
        for b in &d.bounds {
            let l = b.get_ref();
            let (a, c) = (label(l.from, b.span())?, label(l.to, b.span())?);
            graph
                .set_delay_bound(NodeId(a), NodeId(c), l.delay)
                .map_err(|e| src.error(b.span(), e.to_string()))?;
        }
        graph
            .check_delay_bounds(d.tau_bar)
            .map_err(|e| src.error(0..0, format!("[delays] {e}")))?;
        let delays = match d.model {
            DelayKindConfig::Stochastic => {
                if !d.links.is_empty() || d.fill.is_some() {
                    return Err(src.error(
                        d.links.first().map_or(0..0, |l| l.span()),
                        "links and fill only apply to the fixed delay model",
                    ));
                }
                DelayModel::stochastic(d.tau_bar, self.seed)
            }
            DelayKindConfig::Fixed => {
                let mut fixed = FixedDelays::uniform(&graph, d.fill.unwrap_or(0));
                for l in &d.links {
                    let v = l.get_ref();
                    let (a, b) = (label(v.from, l.span())?, label(v.to, l.span())?);
                    if !graph.has_edge(NodeId(a), NodeId(b)) {
                        return Err(src.error(l.span(), format!("no link between {} and {}", v.from, v.to)));
                    }
                    fixed.set(NodeId(a), NodeId(b), v.delay);
                }
                for ((a, b), delay) in fixed.iter() {
                    let bound = graph.effective_delay_bound(a, b, d.tau_bar);
                    if delay > bound {
                        return Err(src.error(
                            0..0,
                            format!("[delays] delay {delay} on link {a} -> {b} exceeds its bound {bound}"),
                        ));
                    }
                }
                DelayModel::fixed(d.tau_bar, fixed)
            }
        };

        let s = self.schedule.get_ref();
        let sched_span = self.schedule.span();
        let demand = match &s.demand {
            DemandConfig::Constant(w) => DemandProfile::constant(*w),
            DemandConfig::Steps(steps) => DemandProfile::steps(steps.iter().map(|&[h, w]| (h, w)).collect())
                .map_err(|e| src.error(sched_span.clone(), e.to_string()))?,
        };
        let schedule = DispatchSchedule {
            demand,
            consensus_period_s: s.consensus_period_s,
            dispatch_period_s: s.dispatch_period_s,
            epsilon: s.epsilon,
            start_h: s.start_h,
            end_h: s.end_h,
        };
        schedule
            .validate()
            .map_err(|e| src.error(sched_span.clone(), e.to_string()))?;
        let demand_nodes = s
            .demand_nodes
            .iter()
            .map(|&l| label(l, sched_span.clone()).map(NodeId))
            .collect::<Result<Vec<_>, _>>()?;
        if demand_nodes.is_empty() {
            return Err(src.error(sched_span, "demand_nodes must name at least one node"));
        }

        let mut units: Vec<Option<LisUnit>> = vec![None; g.nodes];
        for u in &self.units {
            let span = u.span();
            let unit = self.unit(u.get_ref(), span.clone(), src, &label)?;
            let slot = &mut units[unit.id.0];
            if slot.is_some() {
                return Err(src.error(span, format!("unit {} is defined twice", unit.id)));
            }
            *slot = Some(unit);
        }
        let units = units
            .into_iter()
            .enumerate()
            .map(|(i, u)| u.ok_or_else(|| src.error(graph_span.clone(), format!("node {} has no [[units]] entry", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        let fleet = Fleet { units, demand_nodes };
        fleet
            .validate(&graph)
            .map_err(|e| src.error(graph_span.clone(), e.to_string()))?;
        for u in &self.units {
            let unit = &fleet.units[u.get_ref().id - 1];
            if let UnitKind::Renewable(p) = &unit.kind {
                let (lo, hi) = p.domain();
                if lo > schedule.start_h || hi < schedule.end_h {
                    return Err(src.error(
                        u.span(),
                        format!(
                            "profile of unit {} does not cover the schedule {}..{} h",
                            unit.id, schedule.start_h, schedule.end_h
                        ),
                    ));
                }
            }
        }

        Ok(Scenario {
            seed: self.seed,
            rho,
            graph,
            fleet,
            schedule,
            delays,
            diameter: g.diameter,
            out_dir: self.output.dir.clone(),
        })
    }

    fn unit(
        &self,
        u: &UnitConfig,
        span: Range<usize>,
        src: &Source,
        label: &dyn Fn(usize, Range<usize>) -> Result<usize, ConfigError>,
    ) -> Result<LisUnit, ConfigError> {
        let id = NodeId(label(u.id, span.clone())?);
        let tracking = match u.time_constant_s {
            None => Tracking::Instant,
            Some(tc) if tc > 0.0 => Tracking::FirstOrder { time_constant_s: tc },
            Some(_) => return Err(src.error(span, "time_constant_s must be positive")),
        };
        let kind = match u.kind {
            UnitKindConfig::Dispatchable => {
                let (Some(min), Some(max), None) = (u.min, u.max, &u.profile) else {
                    return Err(src.error(span, "a dispatchable unit needs min and max and no profile"));
                };
                if !(0.0 <= min && min < max && max.is_finite()) {
                    return Err(src.error(span, format!("bounds must satisfy 0 <= min < max, got {min}..{max}")));
                }
                UnitKind::Dispatchable(Bounds::new(min, max))
            }
            UnitKindConfig::Renewable => {
                let (None, None, Some(profile)) = (u.min, u.max, &u.profile) else {
                    return Err(src.error(span, "a renewable unit needs a profile and no min or max"));
                };
                let profile = PvProfile::new(profile.iter().map(|&[h, w]| (h, w)).collect())
                    .map_err(|e| src.error(span.clone(), e.to_string()))?;
                UnitKind::Renewable(profile)
            }
        };
        Ok(LisUnit { id, kind, tracking })
    }
}
