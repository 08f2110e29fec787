//! JSON documents on disk: scenarios, demonstrations, weights, plans and
//! training logs. Every document carries `"schema": 1`.

use crate::behavioral::PlanInterface;
use crate::costing::WeightScheme;
use crate::dynamics::Control;
use crate::error::{PlanError, Result};
use crate::learning::{Checkpoint, DemoExample, LogRecord};
use crate::optim::Status;
use crate::planner::Plan;
use crate::world::{infer_behavior, BehaviorKind, PathConfig, Scenario, Trajectory};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Doc<T> {
    schema: u32,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize, Deserialize)]
struct ScenarioBody {
    scenario: Scenario,
}

fn io_err(path: &Path, source: std::io::Error) -> PlanError {
    PlanError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn position_of(text: &str, needle: &str) -> (usize, usize) {
    match text.find(needle) {
        Some(off) => {
            let before = &text[..off];
            let line = before.matches('\n').count() + 1;
            let col = off - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, col)
        }
        None => (1, 1),
    }
}

/// Parses a schema-versioned document with positioned errors.
pub fn parse_doc<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    #[derive(Deserialize)]
    struct Head {
        schema: Option<u32>,
    }
    let parse_err = |e: serde_json::Error| PlanError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    let head: Head = serde_json::from_str(text).map_err(parse_err)?;
    match head.schema {
        Some(SCHEMA_VERSION) => {}
        Some(v) => {
            let (line, column) = position_of(text, "\"schema\"");
            return Err(PlanError::Parse {
                origin: origin.to_string(),
                line,
                column,
                message: format!(
                    "field `schema`: unsupported version {v}, expected {SCHEMA_VERSION}"
                ),
            });
        }
        None => {
            return Err(PlanError::Parse {
                origin: origin.to_string(),
                line: 1,
                column: 1,
                message: "missing field `schema`".into(),
            })
        }
    }
    let doc: Doc<T> = serde_json::from_str(text).map_err(parse_err)?;
    Ok(doc.body)
}

pub fn to_doc_string<T: Serialize>(body: &T) -> String {
    let doc = Doc {
        schema: SCHEMA_VERSION,
        body,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("documents serialize");
    s.push('\n');
    s
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let body: ScenarioBody = parse_doc(text, origin)?;
    let mut sc = body.scenario;
    sc.validate().map_err(|e| match e {
        PlanError::InvalidScenario(m) => PlanError::InvalidScenario(format!("{origin}: {m}")),
        other => other,
    })?;
    Ok(sc)
}

pub fn scenario_to_string(sc: &Scenario) -> String {
    to_doc_string(&ScenarioBody {
        scenario: sc.clone(),
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&read(path)?, &path.display().to_string())
}

pub fn save_scenario(path: &Path, sc: &Scenario) -> Result<()> {
    write(path, &scenario_to_string(sc))
}

/// A demonstration on disk; the behavior may be left out.
#[derive(Deserialize)]
struct DemoDoc {
    #[serde(default)]
    id: String,
    scenario: Scenario,
    #[serde(default)]
    human_behavior: Option<BehaviorKind>,
    human_trajectory: Trajectory,
    #[serde(default)]
    human_controls: Option<Vec<Control>>,
}

/// Parses a demonstration. A missing `human_behavior` is inferred from the
/// lane the trajectory ends in.
pub fn parse_demo(text: &str, origin: &str) -> Result<DemoExample> {
    let mut doc: DemoDoc = parse_doc(text, origin)?;
    doc.scenario.validate()?;
    let human_behavior = match doc.human_behavior {
        Some(b) => b,
        None => infer_behavior(&doc.scenario, &doc.human_trajectory, &PathConfig::default())?,
    };
    Ok(DemoExample {
        id: doc.id,
        scenario: doc.scenario,
        human_behavior,
        human_trajectory: doc.human_trajectory,
        human_controls: doc.human_controls,
    })
}

pub fn load_demo(path: &Path) -> Result<DemoExample> {
    let mut demo = parse_demo(&read(path)?, &path.display().to_string())?;
    if demo.id.is_empty() {
        demo.id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(demo)
}

pub fn save_demo(path: &Path, demo: &DemoExample) -> Result<()> {
    write(path, &to_doc_string(demo))
}

/// Every `*.json` demonstration in `dir`, in file-name order.
pub fn load_dataset(dir: &Path) -> Result<Vec<DemoExample>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files.iter().map(|p| load_demo(p)).collect()
}

#[derive(Serialize, Deserialize)]
struct WeightsBody {
    weights: WeightScheme,
}

pub fn parse_weights(text: &str, origin: &str) -> Result<WeightScheme> {
    let w = parse_doc::<WeightsBody>(text, origin)?.weights;
    w.validate()?;
    Ok(w)
}

pub fn load_weights(path: &Path) -> Result<WeightScheme> {
    parse_weights(&read(path)?, &path.display().to_string())
}

pub fn save_weights(path: &Path, w: &WeightScheme) -> Result<()> {
    write(path, &to_doc_string(&WeightsBody { weights: w.clone() }))
}

pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    write(path, &to_doc_string(c))
}

/// A checkpoint file doubles as a weight file.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let c: Checkpoint = parse_doc(&read(path)?, &path.display().to_string())?;
    c.weights.validate()?;
    Ok(c)
}

/// Loads weights from either a weight file or a checkpoint.
pub fn load_any_weights(path: &Path) -> Result<WeightScheme> {
    let text = read(path)?;
    let origin = path.display().to_string();
    match parse_doc::<Checkpoint>(&text, &origin) {
        Ok(c) => {
            c.weights.validate()?;
            Ok(c.weights)
        }
        Err(_) => parse_weights(&text, &origin),
    }
}

/// Serialized planner output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub scenario: String,
    pub behavior: BehaviorKind,
    pub target_lane: String,
    pub candidate_index: usize,
    pub behavioral_cost: f64,
    pub coarse: Trajectory,
    pub controls: Vec<Control>,
    pub refined: Trajectory,
    pub cost_initial: f64,
    pub cost_final: f64,
    pub iterations: usize,
    pub status: Status,
    pub fit_rms_error: f64,
    pub interface: PlanInterface,
}

impl PlanFile {
    pub fn from_plan(scenario: &Scenario, p: &Plan) -> Self {
        Self {
            scenario: scenario.name.clone(),
            behavior: p.decision.behavior.kind,
            target_lane: p.decision.behavior.target_lane.clone(),
            candidate_index: p.decision.candidate_index,
            behavioral_cost: p.decision.cost,
            coarse: p.decision.coarse.clone(),
            controls: p.refined.controls.clone(),
            refined: p.refined.trajectory.clone(),
            cost_initial: p.refined.f_initial,
            cost_final: p.refined.f_final,
            iterations: p.refined.iterations,
            status: p.refined.status,
            fit_rms_error: p.fit.rms_error,
            interface: p.decision.interface.clone(),
        }
    }
}

pub fn save_plan(path: &Path, scenario: &Scenario, p: &Plan) -> Result<()> {
    write(path, &to_doc_string(&PlanFile::from_plan(scenario, p)))
}

pub fn load_plan(path: &Path) -> Result<PlanFile> {
    parse_doc(&read(path)?, &path.display().to_string())
}

/// Writes one JSON record per line.
pub fn write_log(path: &Path, log: &[LogRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in log {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.write_all(b"\n").expect("in-memory write");
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text)
}

pub fn read_text(path: &Path) -> Result<String> {
    read(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synthetic::{generate, Template};

    #[test]
    fn scenario_round_trip() {
        let sc = generate(Template::PedestrianCrossing, 4);
        let text = scenario_to_string(&sc);
        let back = parse_scenario(&text, "mem").unwrap();
        assert_eq!(scenario_to_string(&back), text);
    }

    #[test]
    fn truncated_document_reports_position() {
        let text = scenario_to_string(&generate(Template::Straight, 1));
        let cut = &text[..text.len() / 2];
        match parse_scenario(cut, "cut.json") {
            Err(PlanError::Parse { line, origin, .. }) => {
                assert!(line > 1);
                assert_eq!(origin, "cut.json");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_schema_is_positioned() {
        let text = scenario_to_string(&generate(Template::Straight, 1)).replacen(
            "\"schema\": 1",
            "\"schema\": 7",
            1,
        );
        let err = parse_scenario(&text, "x").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("schema"), "{err}");
    }

    #[test]
    fn probability_sums_are_checked() {
        let mut sc = generate(Template::LeadVehicle, 1);
        sc.obstacles[0].predictions[0].probability = 0.5;
        let err = parse_scenario(&scenario_to_string(&sc), "x")
            .unwrap_err()
            .to_string();
        assert!(err.contains("lead") && err.contains("sum"), "{err}");
    }

    #[test]
    fn unknown_registry_version_rejected() {
        let mut w = WeightScheme::default_shared();
        w.registry_version = 99;
        let text = to_doc_string(&WeightsBody { weights: w });
        assert!(matches!(
            parse_weights(&text, "w"),
            Err(PlanError::Registry(_))
        ));
    }
}
