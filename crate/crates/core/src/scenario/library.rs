//! On-disk scenario library: one JSON document per line, one line per kept
//! scenario, with named parameters and generation provenance.

use crate::error::{CoreError, Result};
use crate::scenario::{template, GeneratorId, ScenarioSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

pub const LIBRARY_SCHEMA: &str = "scenario-library/v1";

/// One kept scenario with the measurements that earned it its slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub schema: String,
    pub template_id: u8,
    pub route_id: u8,
    pub generator: GeneratorId,
    /// Parameters keyed by their template-defined names.
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    /// Risk objective achieved during generation.
    pub objective: f64,
    /// Closest ego-adversary approach during the generation rollout (m).
    pub min_distance: f64,
    /// Whether the generation rollout ended in a collision.
    pub collision: bool,
    /// Generation iteration (evaluation index) that produced this entry.
    pub iteration: u32,
}

impl LibraryEntry {
    pub fn new(
        spec: &ScenarioSpec,
        objective: f64,
        min_distance: f64,
        collision: bool,
        iteration: u32,
    ) -> Result<LibraryEntry> {
        let def = template(spec.template_id)?;
        if spec.params.len() != def.params.len() {
            return Err(CoreError::InvalidSpec(format!(
                "expected {} parameters, got {}",
                def.params.len(),
                spec.params.len()
            )));
        }
        let params = def
            .params
            .iter()
            .zip(&spec.params)
            .map(|(pd, v)| (pd.name.to_string(), *v))
            .collect();
        Ok(LibraryEntry {
            schema: LIBRARY_SCHEMA.to_string(),
            template_id: spec.template_id,
            route_id: spec.route_id,
            generator: spec.generator,
            params,
            seed: spec.seed,
            objective,
            min_distance,
            collision,
            iteration,
        })
    }

    /// Rebuild the positional spec from the named parameters.
    pub fn to_spec(&self) -> Result<ScenarioSpec> {
        let def = template(self.template_id)?;
        let mut params = Vec::with_capacity(def.params.len());
        for pd in def.params {
            let v = self.params.get(pd.name).ok_or_else(|| {
                CoreError::InvalidSpec(format!("library entry missing parameter {}", pd.name))
            })?;
            params.push(*v);
        }
        Ok(ScenarioSpec {
            template_id: self.template_id,
            route_id: self.route_id,
            generator: self.generator,
            params,
            seed: self.seed,
        })
    }
}

/// Serialize entries as JSON lines.
pub fn write_library<W: Write>(mut w: W, entries: &[LibraryEntry]) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a JSONL library, validating the per-entry schema tag.
pub fn read_library<R: BufRead>(r: R) -> Result<Vec<LibraryEntry>> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LibraryEntry = serde_json::from_str(&line).map_err(|e| {
            CoreError::InvalidSpec(format!("library line {}: {e}", idx + 1))
        })?;
        if entry.schema != LIBRARY_SCHEMA {
            return Err(CoreError::Schema {
                found: entry.schema,
                expected: LIBRARY_SCHEMA.to_string(),
            });
        }
        out.push(entry);
    }
    Ok(out)
}

/// Convenience file wrappers.
pub fn save_library(path: &Path, entries: &[LibraryEntry]) -> Result<()> {
    let mut buf = Vec::new();
    write_library(&mut buf, entries)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_library(path: &Path) -> Result<Vec<LibraryEntry>> {
    let f = std::fs::File::open(path)?;
    read_library(std::io::BufReader::new(f))
}
