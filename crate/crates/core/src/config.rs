//! TOML model description: converters, lines, communication links,
//! controller and step scenario.
//!
//! Physical quantities are either bare numbers in SI units or strings of the
//! form `"<value> <unit>"` with a unit from `V kV A F uF ohm S s ms`.
//! Converter and line indices are 1-based in the file and 0-based in memory.

use std::fmt;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controllers::{Controller, DistributedController, DroopController};
use crate::error::{Error, Result};
use crate::graph::GridTopology;
use crate::model::{
    assemble_distributed_loop, assemble_droop_loop, ClosedLoopSystem, ControllerKind,
    ConverterParams,
};
use crate::simulator::Scenario;

pub const DEFAULT_PRESET: &str = "paper_4term";

const PRESETS: &[(&str, &str)] = &[(DEFAULT_PRESET, include_str!("../presets/paper_4term.toml"))];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

pub fn preset_source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| *src)
        .ok_or_else(|| Error::Config {
            location: format!("preset '{name}'"),
            message: format!(
                "unknown preset; available: {}",
                preset_names().collect::<Vec<_>>().join(", ")
            ),
        })
}

pub fn load_preset(name: &str) -> Result<ModelConfig> {
    parse_str(preset_source(name)?, &format!("preset '{name}'"))
}

/// Reads and validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ModelConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_str(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Voltage,
    Current,
    Capacitance,
    Resistance,
    Conductance,
    Time,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Dimension::Voltage => "voltage",
            Dimension::Current => "current",
            Dimension::Capacitance => "capacitance",
            Dimension::Resistance => "resistance",
            Dimension::Conductance => "conductance",
            Dimension::Time => "time",
        };
        f.write_str(s)
    }
}

/// Unit symbol, dimension, multiplier, divisor. Sub-unit prefixes divide so
/// that e.g. `123.79 uF` lands on the nearest double to `1.2379e-4`.
const UNITS: &[(&str, Dimension, f64, f64)] = &[
    ("V", Dimension::Voltage, 1.0, 1.0),
    ("kV", Dimension::Voltage, 1e3, 1.0),
    ("A", Dimension::Current, 1.0, 1.0),
    ("F", Dimension::Capacitance, 1.0, 1.0),
    ("uF", Dimension::Capacitance, 1.0, 1e6),
    ("ohm", Dimension::Resistance, 1.0, 1.0),
    ("S", Dimension::Conductance, 1.0, 1.0),
    ("s", Dimension::Time, 1.0, 1.0),
    ("ms", Dimension::Time, 1.0, 1e3),
];

fn si_symbol(dim: Dimension) -> &'static str {
    match dim {
        Dimension::Voltage => "V",
        Dimension::Current => "A",
        Dimension::Capacitance => "F",
        Dimension::Resistance => "ohm",
        Dimension::Conductance => "S",
        Dimension::Time => "s",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Quantity {
    Number(f64),
    Text(String),
}

impl Quantity {
    fn si(value: f64, dim: Dimension) -> Self {
        Quantity::Text(format!("{value} {}", si_symbol(dim)))
    }

    fn resolve(&self, dim: Dimension, field: &str, source: &str) -> Result<f64> {
        let err = |message: String| Error::Config {
            location: format!("{source}: {field}"),
            message,
        };
        let value = match self {
            Quantity::Number(v) => *v,
            Quantity::Text(s) => {
                let mut parts = s.split_whitespace();
                let (num, unit) = match (parts.next(), parts.next(), parts.next()) {
                    (Some(n), Some(u), None) => (n, Some(u)),
                    (Some(n), None, None) => (n, None),
                    _ => {
                        return Err(err(format!(
                            "cannot read quantity '{s}', expected '<value> <unit>'"
                        )))
                    }
                };
                let v: f64 = num
                    .parse()
                    .map_err(|_| err(format!("'{num}' is not a number")))?;
                match unit {
                    None => v,
                    Some(u) => {
                        let (_, udim, mul, div) =
                            UNITS.iter().find(|(sym, ..)| *sym == u).ok_or_else(|| {
                                err(format!(
                                    "unknown unit '{u}'; expected one of {}",
                                    UNITS.iter().map(|u| u.0).collect::<Vec<_>>().join(", ")
                                ))
                            })?;
                        if *udim != dim {
                            return Err(err(format!("unit '{u}' is a {udim}, expected a {dim}")));
                        }
                        v * mul / div
                    }
                }
            }
        };
        if !value.is_finite() {
            return Err(err("value must be finite".into()));
        }
        Ok(value)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comm_links: Option<RawComm>,
    controller: RawController,
    converters: Vec<RawConverter>,
    #[serde(default)]
    lines: Vec<RawLine>,
    scenario: RawScenario,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawComm {
    Directive(String),
    Links(Vec<RawLink>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    i: usize,
    j: usize,
    gain: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    vnom: Quantity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<Quantity>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConverter {
    id: usize,
    capacitance: Quantity,
    kp: Quantity,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    regulator: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    i: usize,
    j: usize,
    resistance: Quantity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    pre_injections: Vec<Quantity>,
    post_injections: Vec<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step_time: Option<Quantity>,
    horizon: Quantity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample_interval: Option<Quantity>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSpec {
    pub a: usize,
    pub b: usize,
    pub resistance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommSpec {
    /// `c_ij = 1/R_ij` on every line.
    MirrorLines,
    Links(Vec<(usize, usize, f64)>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    pub gamma: Option<f64>,
    pub tau: f64,
}

/// A validated model: every quantity in SI, indices 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub params: ConverterParams,
    pub lines: Vec<LineSpec>,
    pub comm: CommSpec,
    pub controller: ControllerSpec,
    pub scenario: Scenario,
    line_topology: GridTopology,
    comm_topology: GridTopology,
}

fn located(source: &str, field: impl Into<String>) -> impl Fn(Error) -> Error + '_ {
    let field = field.into();
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::Config {
            location: format!("{source}: {field}"),
            message: other.to_string(),
        },
    }
}

pub fn parse_str(text: &str, source: &str) -> Result<ModelConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
        location: source.to_string(),
        message: e.to_string().trim_end().to_string(),
    })?;
    from_raw(raw, source)
}

fn from_raw(raw: RawConfig, source: &str) -> Result<ModelConfig> {
    let n = raw.converters.len();
    if n == 0 {
        return Err(Error::Config {
            location: format!("{source}: converters"),
            message: "at least one converter is required".into(),
        });
    }
    let mut slots: Vec<Option<(f64, f64, bool)>> = vec![None; n];
    for (k, c) in raw.converters.iter().enumerate() {
        let field = format!("converters[{k}]");
        if c.id == 0 || c.id > n {
            return Err(Error::Config {
                location: format!("{source}: {field}.id"),
                message: format!("id {} outside 1..={n}", c.id),
            });
        }
        if slots[c.id - 1].is_some() {
            return Err(Error::Config {
                location: format!("{source}: {field}.id"),
                message: format!("duplicate converter id {}", c.id),
            });
        }
        let cap = c.capacitance.resolve(
            Dimension::Capacitance,
            &format!("{field}.capacitance"),
            source,
        )?;
        let kp =
            c.kp.resolve(Dimension::Conductance, &format!("{field}.kp"), source)?;
        slots[c.id - 1] = Some((cap, kp, c.regulator));
    }
    let slots: Vec<(f64, f64, bool)> = slots
        .into_iter()
        .map(|s| s.expect("ids are a permutation"))
        .collect();
    let mut regulator: Vec<bool> = slots.iter().map(|s| s.2).collect();
    let flagged = regulator.iter().filter(|f| **f).count();
    if flagged > 1 {
        return Err(Error::Config {
            location: format!("{source}: converters"),
            message: format!("{flagged} converters flagged as regulator, at most one allowed"),
        });
    }
    if flagged == 0 {
        regulator[0] = true;
    }

    let vnom = raw
        .controller
        .vnom
        .resolve(Dimension::Voltage, "controller.vnom", source)?;
    let params = ConverterParams::new(
        slots.iter().map(|s| s.0).collect(),
        slots.iter().map(|s| s.1).collect(),
        regulator,
        vnom,
    )
    .map_err(located(source, "converters"))?;

    let mut lines = Vec::with_capacity(raw.lines.len());
    for (k, l) in raw.lines.iter().enumerate() {
        let field = format!("lines[{k}]");
        let r = l.resistance.resolve(
            Dimension::Resistance,
            &format!("{field}.resistance"),
            source,
        )?;
        if l.i == 0 || l.j == 0 {
            return Err(Error::Config {
                location: format!("{source}: {field}"),
                message: "line endpoints are 1-based".into(),
            });
        }
        lines.push(LineSpec {
            a: l.i - 1,
            b: l.j - 1,
            resistance: r,
        });
    }
    let line_topology =
        GridTopology::from_resistances(n, lines.iter().map(|l| (l.a, l.b, l.resistance)))
            .map_err(located(source, "lines"))?;

    let comm = match raw.comm_links {
        None => CommSpec::MirrorLines,
        Some(RawComm::Directive(d)) if d == "mirror_lines" => CommSpec::MirrorLines,
        Some(RawComm::Directive(d)) => {
            return Err(Error::Config {
                location: format!("{source}: comm_links"),
                message: format!(
                    "unknown directive '{d}', expected \"mirror_lines\" or a list of links"
                ),
            })
        }
        Some(RawComm::Links(links)) => {
            let mut out = Vec::with_capacity(links.len());
            for (k, l) in links.iter().enumerate() {
                if l.i == 0 || l.j == 0 {
                    return Err(Error::Config {
                        location: format!("{source}: comm_links[{k}]"),
                        message: "link endpoints are 1-based".into(),
                    });
                }
                out.push((l.i - 1, l.j - 1, l.gain));
            }
            CommSpec::Links(out)
        }
    };
    let comm_topology = match &comm {
        CommSpec::MirrorLines => line_topology.clone(),
        CommSpec::Links(links) => {
            GridTopology::new(n, links.iter().copied()).map_err(located(source, "comm_links"))?
        }
    };

    let kind = match raw.controller.kind.as_str() {
        "droop" => ControllerKind::Droop,
        "distributed" => ControllerKind::Distributed,
        other => {
            return Err(Error::Config {
                location: format!("{source}: controller.kind"),
                message: format!("unknown controller '{other}', expected droop or distributed"),
            })
        }
    };
    if let Some(g) = raw.controller.gamma {
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::Config {
                location: format!("{source}: controller.gamma"),
                message: format!("gamma must be positive, got {g}"),
            });
        }
    }
    if kind == ControllerKind::Distributed && raw.controller.gamma.is_none() {
        return Err(Error::Config {
            location: format!("{source}: controller.gamma"),
            message: "the distributed controller needs gamma".into(),
        });
    }
    let tau = match &raw.controller.tau {
        Some(q) => q.resolve(Dimension::Time, "controller.tau", source)?,
        None => 0.0,
    };
    if tau < 0.0 {
        return Err(Error::Config {
            location: format!("{source}: controller.tau"),
            message: "delay must be non-negative".into(),
        });
    }

    let s = &raw.scenario;
    let currents = |qs: &[Quantity], name: &str| -> Result<DVector<f64>> {
        if qs.len() != n {
            return Err(Error::Config {
                location: format!("{source}: scenario.{name}"),
                message: format!("{} entries for {n} converters", qs.len()),
            });
        }
        let v: Result<Vec<f64>> = qs
            .iter()
            .enumerate()
            .map(|(k, q)| q.resolve(Dimension::Current, &format!("scenario.{name}[{k}]"), source))
            .collect();
        Ok(DVector::from_vec(v?))
    };
    let scenario = Scenario {
        pre_injections: currents(&s.pre_injections, "pre_injections")?,
        post_injections: currents(&s.post_injections, "post_injections")?,
        step_time: match &s.step_time {
            Some(q) => q.resolve(Dimension::Time, "scenario.step_time", source)?,
            None => 0.0,
        },
        horizon: s
            .horizon
            .resolve(Dimension::Time, "scenario.horizon", source)?,
        delay: tau,
        sample_interval: match &s.sample_interval {
            Some(q) => q.resolve(Dimension::Time, "scenario.sample_interval", source)?,
            None => 1e-3,
        },
        max_step: None,
    };
    scenario.validate(n).map_err(located(source, "scenario"))?;

    Ok(ModelConfig {
        params,
        lines,
        comm,
        controller: ControllerSpec {
            kind,
            gamma: raw.controller.gamma,
            tau,
        },
        scenario,
        line_topology,
        comm_topology,
    })
}

impl ModelConfig {
    pub fn nodes(&self) -> usize {
        self.params.len()
    }

    pub fn line_topology(&self) -> &GridTopology {
        &self.line_topology
    }

    pub fn comm_topology(&self) -> &GridTopology {
        &self.comm_topology
    }

    pub fn gamma(&self) -> Result<f64> {
        self.controller
            .gamma
            .ok_or_else(|| Error::validation("controller.gamma is not set"))
    }

    /// Closed loop for `kind` with the given injections.
    pub fn system(
        &self,
        kind: ControllerKind,
        injections: &DVector<f64>,
    ) -> Result<ClosedLoopSystem> {
        match kind {
            ControllerKind::Droop => {
                assemble_droop_loop(&self.line_topology, &self.params, injections)
            }
            ControllerKind::Distributed => assemble_distributed_loop(
                &self.line_topology,
                &self.comm_topology,
                &self.params,
                self.gamma()?,
                injections,
            ),
        }
    }

    pub fn controller(&self, kind: ControllerKind, tau: f64) -> Result<Controller> {
        match kind {
            ControllerKind::Droop => {
                if tau > 0.0 {
                    return Err(Error::validation(
                        "the droop controller has no communication delay",
                    ));
                }
                Ok(Controller::Droop(DroopController::from_params(
                    &self.params,
                )))
            }
            ControllerKind::Distributed => Ok(Controller::Distributed(DistributedController::new(
                &self.params,
                &self.comm_topology,
                self.gamma()?,
                tau,
            )?)),
        }
    }

    /// Serializes back to the TOML schema with every quantity in SI units.
    pub fn to_toml(&self) -> String {
        let raw = RawConfig {
            comm_links: Some(match &self.comm {
                CommSpec::MirrorLines => RawComm::Directive("mirror_lines".into()),
                CommSpec::Links(links) => RawComm::Links(
                    links
                        .iter()
                        .map(|&(i, j, gain)| RawLink {
                            i: i + 1,
                            j: j + 1,
                            gain,
                        })
                        .collect(),
                ),
            }),
            controller: RawController {
                kind: self.controller.kind.name().into(),
                gamma: self.controller.gamma,
                vnom: Quantity::si(self.params.nominal_voltage(), Dimension::Voltage),
                tau: Some(Quantity::si(self.controller.tau, Dimension::Time)),
            },
            converters: (0..self.nodes())
                .map(|i| RawConverter {
                    id: i + 1,
                    capacitance: Quantity::si(self.params.capacitance()[i], Dimension::Capacitance),
                    kp: Quantity::si(self.params.droop_gain()[i], Dimension::Conductance),
                    regulator: self.params.regulator_flags()[i],
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| RawLine {
                    i: l.a + 1,
                    j: l.b + 1,
                    resistance: Quantity::si(l.resistance, Dimension::Resistance),
                })
                .collect(),
            scenario: RawScenario {
                pre_injections: self
                    .scenario
                    .pre_injections
                    .iter()
                    .map(|&i| Quantity::si(i, Dimension::Current))
                    .collect(),
                post_injections: self
                    .scenario
                    .post_injections
                    .iter()
                    .map(|&i| Quantity::si(i, Dimension::Current))
                    .collect(),
                step_time: Some(Quantity::si(self.scenario.step_time, Dimension::Time)),
                horizon: Quantity::si(self.scenario.horizon, Dimension::Time),
                sample_interval: Some(Quantity::si(self.scenario.sample_interval, Dimension::Time)),
            },
        };
        toml::to_string(&raw).expect("config structure always serializes")
    }
}
