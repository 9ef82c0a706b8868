//! Pipeline orchestration: train agents, generate scenario libraries, select
//! transferable scenarios, evaluate agents, and emit reports — all from one
//! config, with every artifact reproducible from the master seed.

use crate::agents::policy::Policy;
use crate::agents::train::{deterministic, stochastic, TrainReport};
use crate::agents::{run_agent_episode, EgoAgent, ObsSpace};
use crate::error::{CoreError, Result};
use crate::eval::{
    self, diagnostic_report, episode_signals, leaderboard_csv, select_scenarios, DiagnosticReport,
    GenerationCell, MetricRecord, SpecOutcome,
};
use crate::exec;
use crate::generation::{generate, GenerationTask};
use crate::scenario::library::{load_library, save_library, LibraryEntry};
use crate::scenario::{instantiate, layout, GeneratorId, ScenarioInstance, ScenarioSpec};
use crate::seeding::{fnv1a, stage_seed, stream_seed, task_seed};
use crate::sim::trace::EpisodeTrace;
use crate::sim::DT;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

pub const MANIFEST_SCHEMA: &str = "manifest/v1";
pub const REPORT_SCHEMA: &str = "report/v1";

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

/// Neural-agent training sizes. Everything else about the trainers uses the
/// library defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub hidden: Vec<usize>,
    pub stochastic_iterations: usize,
    pub stochastic_steps: usize,
    pub deterministic_steps: usize,
    /// Behavior-cloning warm-start episodes fed to both trainers (0 trains
    /// from scratch).
    pub warmstart_episodes: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            hidden: vec![256, 256],
            stochastic_iterations: 40,
            stochastic_steps: 1000,
            deterministic_steps: 10_000,
            warmstart_episodes: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    /// Master seed: every stage, task, and episode seed derives from it.
    pub seed: u64,
    /// Worker threads for parallel fan-out (0 = library default).
    pub workers: usize,
    pub templates: Vec<u8>,
    pub routes: Vec<u8>,
    pub generators: Vec<GeneratorId>,
    /// Agent specs: `rule_based`, `random`,
    /// `stochastic_pg|deterministic_pg[:obs_space][@seed_offset]`, or a
    /// checkpoint path (contains `/` or ends in `.json`).
    pub agents: Vec<String>,
    /// The agent scenario search attacks (usually a benign-trained policy).
    pub surrogate: String,
    /// Rollout budget per (template, route, generator) task.
    pub budget: usize,
    /// Scenarios kept per task.
    pub keep_k: usize,
    pub train: TrainSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            out_dir: PathBuf::from("runs/out"),
            seed: 0,
            workers: 0,
            templates: (1..=8).collect(),
            routes: (0..=9).collect(),
            generators: vec![
                GeneratorId::Lc,
                GeneratorId::As,
                GeneratorId::Cs,
                GeneratorId::At,
                GeneratorId::Random,
            ],
            agents: vec![
                "stochastic_pg".into(),
                "stochastic_pg@1".into(),
                "deterministic_pg".into(),
                "rule_based".into(),
            ],
            surrogate: "stochastic_pg".into(),
            budget: 100,
            keep_k: 10,
            train: TrainSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        fn unique<T: PartialEq + std::fmt::Debug>(items: &[T], what: &str) -> Result<()> {
            for (i, a) in items.iter().enumerate() {
                if items[i + 1..].contains(a) {
                    return Err(CoreError::Config(format!("duplicate {what}: {a:?}")));
                }
            }
            Ok(())
        }
        if self.templates.is_empty() || self.templates.iter().any(|t| !(1..=8).contains(t)) {
            return Err(CoreError::Config(
                "templates must be a non-empty subset of 1..=8".into(),
            ));
        }
        if self.routes.is_empty() || self.routes.iter().any(|r| *r > 9) {
            return Err(CoreError::Config(
                "routes must be a non-empty subset of 0..=9".into(),
            ));
        }
        if self.generators.is_empty() {
            return Err(CoreError::Config("generators must be non-empty".into()));
        }
        if self.generators.contains(&GeneratorId::Benign) {
            return Err(CoreError::Config(
                "the benign baseline is built implicitly; list only search generators".into(),
            ));
        }
        unique(&self.templates, "template")?;
        unique(&self.routes, "route")?;
        unique(&self.generators, "generator")?;
        if self.budget < self.keep_k || self.keep_k == 0 {
            return Err(CoreError::Config(format!(
                "budget {} must be at least keep_k {} (and keep_k nonzero)",
                self.budget, self.keep_k
            )));
        }
        if self.agents.is_empty() {
            return Err(CoreError::Config("agents must be non-empty".into()));
        }
        let mut labels = Vec::new();
        for raw in &self.agents {
            let spec = parse_agent(raw)?;
            if labels.contains(&spec.label) {
                return Err(CoreError::Config(format!(
                    "duplicate agent label {}",
                    spec.label
                )));
            }
            labels.push(spec.label);
        }
        parse_agent(&self.surrogate)?;
        if self.train.hidden.is_empty() {
            return Err(CoreError::Config("train.hidden must be non-empty".into()));
        }
        Ok(())
    }

    /// Stable fingerprint of the configuration (used in the manifest).
    pub fn config_hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        fnv1a(json.as_bytes())
    }

    fn checkpoint_path(&self, label: &str) -> PathBuf {
        self.out_dir.join("checkpoints").join(format!("{label}.json"))
    }
}

// ---------------------------------------------------------------------------
// stages and agent specs
// ---------------------------------------------------------------------------

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Stage {
    Train,
    Generate,
    Select,
    Evaluate,
    Report,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Generate => "generate",
            Stage::Select => "select",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
            Stage::All => "all",
        }
    }
}

impl FromStr for Stage {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Stage> {
        match s {
            "train" => Ok(Stage::Train),
            "generate" => Ok(Stage::Generate),
            "select" => Ok(Stage::Select),
            "evaluate" => Ok(Stage::Evaluate),
            "report" => Ok(Stage::Report),
            "all" => Ok(Stage::All),
            other => Err(CoreError::Config(format!(
                "unknown stage {other:?} (expected train|generate|select|evaluate|report|all)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AgentKind {
    RuleBased,
    Random,
    StochasticPg,
    DeterministicPg,
    Checkpoint(PathBuf),
}

/// A parsed agent spec string.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec {
    pub label: String,
    pub kind: AgentKind,
    pub space: ObsSpace,
    pub seed_offset: u64,
}

impl AgentSpec {
    pub fn trainable(&self) -> bool {
        matches!(self.kind, AgentKind::StochasticPg | AgentKind::DeterministicPg)
    }
}

/// Parse `rule_based`, `random`, `stochastic_pg[:space][@off]`,
/// `deterministic_pg[:space][@off]`, or a checkpoint path.
pub fn parse_agent(raw: &str) -> Result<AgentSpec> {
    if raw.contains('/') || raw.ends_with(".json") {
        let path = PathBuf::from(raw);
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CoreError::Config(format!("bad checkpoint path {raw:?}")))?
            .to_string();
        return Ok(AgentSpec {
            label,
            kind: AgentKind::Checkpoint(path),
            space: ObsSpace::FourD,
            seed_offset: 0,
        });
    }
    let (body, seed_offset) = match raw.split_once('@') {
        Some((b, off)) => (
            b,
            off.parse::<u64>()
                .map_err(|_| CoreError::Config(format!("bad seed offset in {raw:?}")))?,
        ),
        None => (raw, 0),
    };
    let (base, space) = match body.split_once(':') {
        Some((b, sp)) => (
            b,
            ObsSpace::from_str(sp)
                .map_err(|_| CoreError::Config(format!("unknown observation space in {raw:?}")))?,
        ),
        None => (body, ObsSpace::FourD),
    };
    let kind = match base {
        "rule_based" => AgentKind::RuleBased,
        "random" => AgentKind::Random,
        "stochastic_pg" => AgentKind::StochasticPg,
        "deterministic_pg" => AgentKind::DeterministicPg,
        other => {
            return Err(CoreError::Config(format!(
                "unknown agent {other:?} (expected rule_based|random|stochastic_pg|deterministic_pg or a checkpoint path)"
            )))
        }
    };
    if matches!(kind, AgentKind::RuleBased | AgentKind::Random)
        && (seed_offset != 0 || body.contains(':'))
    {
        return Err(CoreError::Config(format!(
            "{base} takes no observation space or seed offset ({raw:?})"
        )));
    }
    Ok(AgentSpec {
        label: raw.to_string(),
        kind,
        space,
        seed_offset,
    })
}

/// Turn a spec into a runnable agent, loading checkpoints where needed.
/// Trained policies act on their mean (deterministic evaluation).
pub fn resolve_agent(cfg: &PipelineConfig, spec: &AgentSpec) -> Result<EgoAgent> {
    match &spec.kind {
        AgentKind::RuleBased => Ok(EgoAgent::RuleBased),
        AgentKind::Random => Ok(EgoAgent::Random),
        AgentKind::StochasticPg | AgentKind::DeterministicPg => {
            let path = cfg.checkpoint_path(&spec.label);
            let policy = Policy::load(&path).map_err(|e| {
                CoreError::Config(format!(
                    "agent {} needs checkpoint {} (run the train stage first): {e}",
                    spec.label,
                    path.display()
                ))
            })?;
            Ok(EgoAgent::trained(Arc::new(policy), false, spec.label.clone()))
        }
        AgentKind::Checkpoint(path) => {
            let policy = Policy::load(path)?;
            Ok(EgoAgent::trained(Arc::new(policy), false, spec.label.clone()))
        }
    }
}

// ---------------------------------------------------------------------------
// artifacts
// ---------------------------------------------------------------------------

/// Write bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub wall_ms: u64,
    pub artifacts: Vec<String>,
}

/// Run provenance: config fingerprint, master seed, stage timings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub config_hash: u64,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

fn rel(cfg: &PipelineConfig, path: &Path) -> String {
    path.strip_prefix(&cfg.out_dir)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

fn write_records(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

fn read_records(path: &Path) -> Result<Vec<MetricRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::Artifact {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let rec: MetricRecord = serde_json::from_str(line).map_err(|e| CoreError::Artifact {
            path: path.display().to_string(),
            reason: format!("line {}: {e}", i + 1),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn spec_id(entry: &LibraryEntry) -> String {
    format!(
        "{}_t{}_r{}_i{}",
        entry.generator.name(),
        entry.template_id,
        entry.route_id,
        entry.iteration
    )
}

// ---------------------------------------------------------------------------
// stage implementations
// ---------------------------------------------------------------------------

/// Training scene sampler: canonical lawful traffic drawn uniformly over the
/// requested templates and routes. Agents learn to drive among law-abiding
/// actors; staged adversaries appear only at evaluation time.
pub fn benign_sampler<'a>(
    templates: &'a [u8],
    routes: &'a [u8],
) -> impl FnMut(&mut ChaCha8Rng) -> Result<ScenarioInstance> + 'a {
    move |rng| {
        let t = templates[rng.gen_range(0..templates.len())];
        let r = routes[rng.gen_range(0..routes.len())];
        instantiate(&ScenarioSpec::benign(t, r)?)
    }
}

fn stage_train(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let stage = stage_seed(cfg.seed, "train");
    let mut artifacts = Vec::new();

    // Train every trainable agent in the panel, plus the surrogate if it is
    // trainable and not already listed.
    let mut specs: Vec<AgentSpec> = Vec::new();
    for raw in &cfg.agents {
        specs.push(parse_agent(raw)?);
    }
    let surrogate = parse_agent(&cfg.surrogate)?;
    if surrogate.trainable() && !specs.iter().any(|s| s.label == surrogate.label) {
        specs.push(surrogate);
    }

    for spec in specs.iter().filter(|s| s.trainable()) {
        let seed = task_seed(stage, 0, 0, &spec.label) ^ spec.seed_offset;
        let mut sampler = benign_sampler(&cfg.templates, &cfg.routes);
        let report: TrainReport = match spec.kind {
            AgentKind::StochasticPg => {
                let tc = stochastic::StochasticPgConfig {
                    space: spec.space,
                    hidden: cfg.train.hidden.clone(),
                    iterations: cfg.train.stochastic_iterations,
                    steps_per_iteration: cfg.train.stochastic_steps,
                    seed,
                    ..stochastic::StochasticPgConfig::default()
                };
                stochastic::train(&tc, &mut sampler)?
            }
            AgentKind::DeterministicPg => {
                let tc = deterministic::DeterministicPgConfig {
                    space: spec.space,
                    hidden: cfg.train.hidden.clone(),
                    total_steps: cfg.train.deterministic_steps,
                    seed,
                    ..deterministic::DeterministicPgConfig::default()
                };
                deterministic::train(&tc, &mut sampler)?
            }
            _ => unreachable!("filtered to trainable kinds"),
        };

        let ckpt = cfg.checkpoint_path(&spec.label);
        if let Some(parent) = ckpt.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let json = serde_json::to_string_pretty(&report.policy)?;
        write_atomic(&ckpt, json.as_bytes())?;
        artifacts.push(rel(cfg, &ckpt));

        let log_path = cfg.out_dir.join("train").join(format!("{}.jsonl", spec.label));
        let mut buf = Vec::new();
        for it in &report.iterations {
            serde_json::to_writer(&mut buf, it)?;
            buf.push(b'\n');
        }
        write_atomic(&log_path, &buf)?;
        artifacts.push(rel(cfg, &log_path));
    }
    Ok(artifacts)
}

fn stage_generate(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let stage = stage_seed(cfg.seed, "generate");
    let surrogate_spec = parse_agent(&cfg.surrogate)?;
    let surrogate = resolve_agent(cfg, &surrogate_spec)?;
    let mut artifacts = Vec::new();
    let mut library: Vec<LibraryEntry> = Vec::new();

    for &template_id in &cfg.templates {
        for &route_id in &cfg.routes {
            for &generator in &cfg.generators {
                let task = GenerationTask {
                    template_id,
                    route_id,
                    surrogate: surrogate.clone(),
                    budget: cfg.budget,
                    keep_k: cfg.keep_k,
                    seed: task_seed(stage, template_id, route_id, generator.name()),
                };
                let run = generate(&task, generator)?;
                let log_path = cfg.out_dir.join("runlog").join(format!(
                    "{}_t{template_id}_r{route_id}.jsonl",
                    generator.name()
                ));
                let mut buf = Vec::new();
                for line in &run.log {
                    serde_json::to_writer(&mut buf, line)?;
                    buf.push(b'\n');
                }
                write_atomic(&log_path, &buf)?;
                artifacts.push(rel(cfg, &log_path));
                library.extend(run.kept);
            }
        }
    }

    let lib_path = cfg.out_dir.join("library.jsonl");
    save_library(&lib_path, &library)?;
    artifacts.insert(0, rel(cfg, &lib_path));
    Ok(artifacts)
}

fn run_entry_episode(
    entry: &LibraryEntry,
    agent: &EgoAgent,
    seed: u64,
) -> Result<(MetricRecord, bool, EpisodeTrace)> {
    let spec = entry.to_spec()?;
    let instance = instantiate(&spec)?;
    let route = instance.layout.route.clone();
    let rollout = run_agent_episode(instance, agent, seed)?;
    let record = episode_signals(&rollout.trace, &route);
    Ok((record, rollout.collided, rollout.trace))
}

fn stage_select(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let stage = stage_seed(cfg.seed, "select");
    let library = load_library(&cfg.out_dir.join("library.jsonl"))?;
    let mut artifacts = Vec::new();

    let specs: Vec<AgentSpec> = cfg
        .agents
        .iter()
        .map(|raw| parse_agent(raw))
        .collect::<Result<_>>()?;
    let agents: Vec<EgoAgent> = specs
        .iter()
        .map(|s| resolve_agent(cfg, s))
        .collect::<Result<_>>()?;

    // All (entry × agent) episodes, parallel, order-independent seeds.
    let n = library.len();
    let m = agents.len();
    let episodes: Vec<(MetricRecord, bool)> = exec::map_indexed(n * m, |flat| {
        let entry = &library[flat / m];
        let (spec, agent) = (&specs[flat % m], &agents[flat % m]);
        let seed = stream_seed(
            task_seed(stage, entry.template_id, entry.route_id, &spec.label),
            entry.seed,
        );
        run_entry_episode(entry, agent, seed).map(|(rec, hit, _)| (rec, hit))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let matrix: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..m).map(|a| episodes[i * m + a].1).collect())
        .collect();
    // Prefer scenarios that defeat at least two agents (transferable risk);
    // relax when a small run produces none, so downstream stages stay fed.
    let mut kept_rows = select_scenarios(&matrix, 2);
    if kept_rows.is_empty() {
        kept_rows = select_scenarios(&matrix, 1);
    }
    if kept_rows.is_empty() {
        kept_rows = (0..n).collect();
    }

    // Collision matrix CSV.
    let mut csv = String::from("spec_id");
    for s in &specs {
        csv.push(',');
        csv.push_str(&s.label);
    }
    csv.push('\n');
    for (i, entry) in library.iter().enumerate() {
        csv.push_str(&spec_id(entry));
        for a in 0..m {
            csv.push_str(if matrix[i][a] { ",1" } else { ",0" });
        }
        csv.push('\n');
    }
    let matrix_path = cfg.out_dir.join("collision_matrix.csv");
    write_atomic(&matrix_path, csv.as_bytes())?;
    artifacts.push(rel(cfg, &matrix_path));

    // Selected subset, order preserved.
    let selected: Vec<LibraryEntry> = kept_rows.iter().map(|&i| library[i].clone()).collect();
    let selected_path = cfg.out_dir.join("selected.jsonl");
    save_library(&selected_path, &selected)?;
    artifacts.push(rel(cfg, &selected_path));

    // Per-agent records over the whole library (consumed by the report
    // stage's generation-statistics table).
    for (a, spec) in specs.iter().enumerate() {
        let records: Vec<MetricRecord> = (0..n).map(|i| episodes[i * m + a].0).collect();
        let path = cfg
            .out_dir
            .join("records")
            .join("library")
            .join(format!("{}.jsonl", spec.label));
        write_records(&path, &records)?;
        artifacts.push(rel(cfg, &path));
    }
    Ok(artifacts)
}

fn stage_evaluate(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let stage = stage_seed(cfg.seed, "evaluate");
    let selected = load_library(&cfg.out_dir.join("selected.jsonl"))?;
    let mut artifacts = Vec::new();

    let mut benign_specs: Vec<ScenarioSpec> = Vec::new();
    for &t in &cfg.templates {
        for &r in &cfg.routes {
            benign_specs.push(ScenarioSpec::benign(t, r)?);
        }
    }

    for raw in &cfg.agents {
        let spec = parse_agent(raw)?;
        let agent = resolve_agent(cfg, &spec)?;

        let critical: Vec<(MetricRecord, bool)> = exec::map_indexed(selected.len(), |i| {
            let entry = &selected[i];
            let seed = stream_seed(
                task_seed(stage, entry.template_id, entry.route_id, &spec.label),
                entry.seed,
            );
            run_entry_episode(entry, &agent, seed).map(|(rec, hit, _)| (rec, hit))
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let benign: Vec<MetricRecord> = exec::map_indexed(benign_specs.len(), |i| {
            let s = &benign_specs[i];
            let instance = instantiate(s)?;
            let route = instance.layout.route.clone();
            let seed = stream_seed(task_seed(stage, s.template_id, s.route_id, &spec.label), 0);
            let rollout = run_agent_episode(instance, &agent, seed)?;
            Ok(episode_signals(&rollout.trace, &route))
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let crit_path = cfg
            .out_dir
            .join("records")
            .join(format!("{}.critical.jsonl", spec.label));
        write_records(&crit_path, &critical.iter().map(|(r, _)| *r).collect::<Vec<_>>())?;
        artifacts.push(rel(cfg, &crit_path));

        let benign_path = cfg
            .out_dir
            .join("records")
            .join(format!("{}.benign.jsonl", spec.label));
        write_records(&benign_path, &benign)?;
        artifacts.push(rel(cfg, &benign_path));

        // Sample traces: the first colliding episode per template, re-run
        // deterministically and persisted for replay.
        for &t in &cfg.templates {
            let hit = selected
                .iter()
                .enumerate()
                .find(|(i, e)| e.template_id == t && critical[*i].1);
            if let Some((_, entry)) = hit {
                let seed = stream_seed(
                    task_seed(stage, entry.template_id, entry.route_id, &spec.label),
                    entry.seed,
                );
                let (_, _, trace) = run_entry_episode(entry, &agent, seed)?;
                let path = cfg
                    .out_dir
                    .join("traces")
                    .join(&spec.label)
                    .join(format!("t{t}_{}.jsonl", spec_id(entry)));
                let mut buf = Vec::new();
                trace.write_jsonl(&mut buf)?;
                write_atomic(&path, &buf)?;
                artifacts.push(rel(cfg, &path));
            }
        }
    }
    Ok(artifacts)
}

/// One agent's full report: benign and safety-critical panels side by side.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentReport {
    pub schema: String,
    pub agent: String,
    pub benign: DiagnosticReport,
    pub critical: DiagnosticReport,
}

fn stage_report(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let mut artifacts = Vec::new();
    let mut critical_reports = Vec::new();
    let mut benign_reports = Vec::new();

    for raw in &cfg.agents {
        let spec = parse_agent(raw)?;
        let critical = read_records(
            &cfg.out_dir
                .join("records")
                .join(format!("{}.critical.jsonl", spec.label)),
        )?;
        let benign = read_records(
            &cfg.out_dir
                .join("records")
                .join(format!("{}.benign.jsonl", spec.label)),
        )?;
        let report = AgentReport {
            schema: REPORT_SCHEMA.to_string(),
            agent: spec.label.clone(),
            benign: diagnostic_report(&spec.label, &benign)?,
            critical: diagnostic_report(&spec.label, &critical)?,
        };
        let path = cfg
            .out_dir
            .join("report")
            .join(format!("{}.json", spec.label));
        write_atomic(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
        artifacts.push(rel(cfg, &path));
        critical_reports.push(report.critical);
        benign_reports.push(report.benign);
    }

    let lb = cfg.out_dir.join("leaderboard.csv");
    write_atomic(&lb, leaderboard_csv(&critical_reports).as_bytes())?;
    artifacts.push(rel(cfg, &lb));
    let lbb = cfg.out_dir.join("leaderboard_benign.csv");
    write_atomic(&lbb, leaderboard_csv(&benign_reports).as_bytes())?;
    artifacts.push(rel(cfg, &lbb));

    // Generation statistics need the surrogate's column of the selection run.
    let surrogate_label = parse_agent(&cfg.surrogate)?.label;
    if cfg.agents.iter().any(|raw| raw == &cfg.surrogate) {
        let library = load_library(&cfg.out_dir.join("library.jsonl"))?;
        let selected = load_library(&cfg.out_dir.join("selected.jsonl"))?;
        let surrogate_records = read_records(
            &cfg.out_dir
                .join("records")
                .join("library")
                .join(format!("{surrogate_label}.jsonl")),
        )?;
        if surrogate_records.len() != library.len() {
            return Err(CoreError::Artifact {
                path: "records/library".into(),
                reason: format!(
                    "{} surrogate records for {} library entries",
                    surrogate_records.len(),
                    library.len()
                ),
            });
        }
        let selected_ids: std::collections::BTreeSet<String> =
            selected.iter().map(spec_id).collect();
        let mut cells: Vec<GenerationCell> = Vec::new();
        for &generator in &cfg.generators {
            for &template_id in &cfg.templates {
                let outcomes: Vec<SpecOutcome> = library
                    .iter()
                    .zip(&surrogate_records)
                    .filter(|(e, _)| e.generator == generator && e.template_id == template_id)
                    .map(|(e, rec)| SpecOutcome {
                        collided: rec.collision > 0.5,
                        record: *rec,
                        selected: selected_ids.contains(&spec_id(e)),
                    })
                    .collect();
                if outcomes.is_empty() {
                    continue;
                }
                cells.push(eval::generation_cell(
                    generator.name(),
                    template_id,
                    &outcomes,
                )?);
            }
        }
        let mut csv = String::from(
            "generator,template,generated,selected,CR,OS,Comp,SR,S-CR,S-OS,S-Comp\n",
        );
        for c in &cells {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
            let _ = writeln!(
                csv,
                "{},{},{},{},{:.4},{:.4},{:.4},{:.4},{},{},{}",
                c.generator,
                c.template_id,
                c.generated,
                c.selected,
                c.collision_rate,
                c.overall_score,
                c.completion,
                c.selection_rate,
                opt(c.s_collision_rate),
                opt(c.s_overall_score),
                opt(c.s_completion),
            );
        }
        let gs = cfg.out_dir.join("generation_stats.csv");
        write_atomic(&gs, csv.as_bytes())?;
        artifacts.push(rel(cfg, &gs));
    }
    Ok(artifacts)
}

// ---------------------------------------------------------------------------
// driver
// ---------------------------------------------------------------------------

/// Run one stage (or all of them) and write the manifest.
pub fn run_pipeline(cfg: &PipelineConfig, stage: Stage) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let stages: Vec<Stage> = match stage {
        Stage::All => vec![
            Stage::Train,
            Stage::Generate,
            Stage::Select,
            Stage::Evaluate,
            Stage::Report,
        ],
        s => vec![s],
    };
    let records = exec::with_workers(cfg.workers, || -> Result<Vec<StageRecord>> {
        let mut records = Vec::new();
        for s in stages {
            let start = Instant::now();
            let artifacts = match s {
                Stage::Train => stage_train(cfg)?,
                Stage::Generate => stage_generate(cfg)?,
                Stage::Select => stage_select(cfg)?,
                Stage::Evaluate => stage_evaluate(cfg)?,
                Stage::Report => stage_report(cfg)?,
                Stage::All => unreachable!("expanded above"),
            };
            records.push(StageRecord {
                name: s.name().to_string(),
                wall_ms: start.elapsed().as_millis() as u64,
                artifacts,
            });
        }
        Ok(records)
    })?;
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_string(),
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        stages: records,
    };
    let path = cfg.out_dir.join("manifest.json");
    write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

/// Human-readable episode timeline.
pub fn replay_summary(trace: &EpisodeTrace) -> String {
    let mut out = String::new();
    let m = &trace.meta;
    let _ = writeln!(
        out,
        "template {} route {} | generator {} | agent {} | seed {}",
        m.template_id, m.route_id, m.generator_id, m.agent, m.seed
    );
    let _ = writeln!(out, "t=0.00s start");
    for (t, what) in eval::event_timeline(trace) {
        let _ = writeln!(out, "t={t:.2}s {what}");
    }
    let _ = writeln!(
        out,
        "t={:.2}s end ({} ticks)",
        trace.ticks() as f64 * DT,
        trace.ticks()
    );
    out
}

/// Render the episode as a standalone SVG: route, ego path, actor paths, and
/// event markers.
pub fn render_svg(trace: &EpisodeTrace) -> Result<String> {
    let lay = layout(trace.meta.template_id, trace.meta.route_id)?;
    let route = lay.route.points();

    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut extend = |x: f64, y: f64| {
        min.0 = min.0.min(x);
        min.1 = min.1.min(y);
        max.0 = max.0.max(x);
        max.1 = max.1.max(y);
    };
    for p in route {
        extend(p.x, p.y);
    }
    for r in &trace.records {
        extend(r.ego.x, r.ego.y);
        for a in &r.actors {
            extend(a.x, a.y);
        }
    }
    let pad = 10.0;
    let w = (max.0 - min.0 + 2.0 * pad).max(1.0);
    let h = (max.1 - min.1 + 2.0 * pad).max(1.0);
    let scale = (760.0 / w).min(560.0 / h);
    // SVG y grows downward; the world y grows upward.
    let sx = |x: f64| (x - min.0 + pad) * scale + 20.0;
    let sy = |y: f64| (max.1 - y + pad) * scale + 20.0;

    let path_of = |pts: &[(f64, f64)]| -> String {
        let mut d = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, sx(*x), sy(*y));
        }
        d
    };

    let route_pts: Vec<(f64, f64)> = route.iter().map(|p| (p.x, p.y)).collect();
    let ego_pts: Vec<(f64, f64)> = trace.records.iter().map(|r| (r.ego.x, r.ego.y)).collect();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="600" viewBox="0 0 800 600">"#
    );
    let _ = writeln!(svg, r#"<rect width="800" height="600" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<path d="{}" fill="none" stroke="#999" stroke-width="2" stroke-dasharray="6 4"/>"##,
        path_of(&route_pts)
    );
    // Actor paths, one per actor id.
    let mut actor_ids: Vec<u32> = Vec::new();
    for r in &trace.records {
        for a in &r.actors {
            if !actor_ids.contains(&a.id) {
                actor_ids.push(a.id);
            }
        }
    }
    for id in actor_ids {
        let pts: Vec<(f64, f64)> = trace
            .records
            .iter()
            .filter_map(|r| r.actors.iter().find(|a| a.id == id))
            .map(|a| (a.x, a.y))
            .collect();
        let _ = writeln!(
            svg,
            r##"<path d="{}" fill="none" stroke="#e08030" stroke-width="1.5"/>"##,
            path_of(&pts)
        );
    }
    let _ = writeln!(
        svg,
        r##"<path d="{}" fill="none" stroke="#2060c0" stroke-width="2"/>"##,
        path_of(&ego_pts)
    );
    for r in &trace.records {
        for e in &r.events {
            let _ = writeln!(
                svg,
                r##"<circle cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="#c02020" stroke-width="2"/>"##,
                sx(r.ego.x),
                sy(r.ego.y)
            );
            let _ = writeln!(
                svg,
                r##"<text x="{:.2}" y="{:.2}" font-size="11" fill="#c02020">{:?}@{}</text>"##,
                sx(r.ego.x) + 7.0,
                sy(r.ego.y) - 7.0,
                e.kind,
                r.tick
            );
        }
    }
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}
