use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use toric_learn::gibbs::McParams;
use toric_learn::learner::{DataSource, DatasetSpec, FieldKind, FieldSpec, ProtocolOptions};
use toric_learn::network::TrainParams;
use toric_learn::phase::DisorderModel;
use toric_learn::B_CAP;

use crate::CliError;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "TORIC_LEARN_OUTPUT";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    MonteCarlo,
    Enumeration,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Exact for k ≤ 3, solvable otherwise.
    #[default]
    Auto,
    Exact,
    Solvable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    #[serde(flatten)]
    pub spec: DatasetSpec,
    pub source: SourceKind,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            spec: DatasetSpec::default(),
            source: SourceKind::MonteCarlo,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectionConfig {
    pub backend: BackendKind,
    pub fields: FieldSpec,
    pub n_seeds: usize,
    /// Redraw targets until the iteration-0 bit or phase error exceeds this.
    pub min_initial_error: Option<f64>,
    pub noise_sigma: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig {
            backend: BackendKind::Auto,
            fields: FieldSpec::default(),
            n_seeds: 1,
            min_initial_error: None,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub sigmas: Vec<f64>,
    pub n_seeds: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigmas: vec![0.005, 0.01, 0.02],
            n_seeds: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub ks: Vec<usize>,
    pub n_heldout: usize,
    pub correction_scale: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            ks: vec![3, 4, 8, 12, 16, 20, 24],
            n_heldout: 500,
            correction_scale: 1.7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErConfig {
    pub k: usize,
    pub e_max: f64,
    pub grid_points: usize,
    pub n_trials: usize,
}

impl Default for ErConfig {
    fn default() -> Self {
        ErConfig {
            k: 8,
            e_max: 0.2,
            grid_points: 21,
            n_trials: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseConfig {
    pub model: DisorderModel,
    pub k_small: usize,
    pub k_large: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub n_beta: usize,
    pub n_realizations: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            model: DisorderModel::Uniform,
            k_small: 8,
            k_large: 16,
            beta_min: 0.3,
            beta_max: 0.6,
            n_beta: 13,
            n_realizations: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub k: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub dataset: DataConfig,
    pub mc: McParams,
    pub train: TrainParams,
    pub protocol: ProtocolOptions,
    pub correction: CorrectionConfig,
    pub noise: NoiseConfig,
    pub scaling: ScalingConfig,
    pub er: ErConfig,
    pub phase: PhaseConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 3,
            seed: 0,
            output: None,
            threads: None,
            dataset: DataConfig::default(),
            mc: McParams::default(),
            train: TrainParams::default(),
            protocol: ProtocolOptions::default(),
            correction: CorrectionConfig::default(),
            noise: NoiseConfig::default(),
            scaling: ScalingConfig::default(),
            er: ErConfig::default(),
            phase: PhaseConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, overlaid by the file, overlaid by `KEY=VALUE` overrides with
    /// dotted keys. Values parse as JSON and fall back to plain strings.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let defaults = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        let mut merged = defaults.clone();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let user: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if !user.is_object() {
                return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
            }
            merge(&mut merged, user);
        }
        for (key, raw) in overrides {
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            set_path(&mut merged, key, value)?;
        }
        let mut unknown = Vec::new();
        unknown_keys(&defaults, &merged, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(CliError::Config(
                unknown.iter().map(|k| format!("{k}: unknown field")).collect::<Vec<_>>().join("\n"),
            ));
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(merged)
            .map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// All field-level problems at once.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errs: Vec<String> = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        check(self.k >= 2, format!("k: must be at least 2, got {}", self.k));
        check(self.threads != Some(0), "threads: must be positive".into());
        let d = &self.dataset.spec;
        check(d.n > 0, "dataset.n: must be positive".into());
        check(
            d.b_max > 0.0 && d.b_max <= B_CAP,
            format!("dataset.b_max: {} outside (0, {B_CAP}]", d.b_max),
        );
        if let toric_learn::learner::FieldDraw::Multiscale { decades } = d.draw {
            check(decades > 0.0 && decades.is_finite(), "dataset.draw.multiscale.decades: must be positive".into());
        }
        if let Err(e) = self.mc.validate() {
            check(false, format!("mc: {e}"));
        }
        let t = &self.train;
        check(t.steps > 0, "train.steps: must be positive".into());
        check(t.batch_size > 0, "train.batch_size: must be positive".into());
        check(
            t.learning_rate > 0.0 && t.learning_rate.is_finite(),
            "train.learning_rate: must be positive".into(),
        );
        check(t.eval_every > 0, "train.eval_every: must be positive".into());
        let p = &self.protocol;
        check(p.n_iter > 0, "protocol.n_iter: must be at least 1".into());
        check(
            p.damping > 0.0 && p.damping <= 1.0,
            format!("protocol.damping: {} outside (0, 1]", p.damping),
        );
        check(p.infer.deadband >= 0.0, "protocol.infer.deadband: must be non-negative".into());
        let c = &self.correction;
        check(c.n_seeds > 0, "correction.n_seeds: must be positive".into());
        check(
            c.fields.scale >= 0.0 && c.fields.scale <= B_CAP,
            format!("correction.fields.scale: {} outside [0, {B_CAP}]", c.fields.scale),
        );
        check(c.noise_sigma >= 0.0, "correction.noise_sigma: must be non-negative".into());
        if let Some(m) = c.min_initial_error {
            check((0.0..0.5).contains(&m), "correction.min_initial_error: outside [0, 0.5)".into());
        }
        match self.backend() {
            BackendKind::Exact => check(
                self.k <= 3,
                format!("correction.backend: exact needs k ≤ 3, got k = {}", self.k),
            ),
            _ => check(
                c.fields.kind != FieldKind::Mixed,
                "correction.fields.kind: the solvable backend needs star, plaquette or zero fields".into(),
            ),
        }
        check(self.noise.n_seeds > 0, "noise.n_seeds: must be positive".into());
        check(!self.noise.sigmas.is_empty(), "noise.sigmas: must not be empty".into());
        check(
            self.noise.sigmas.iter().all(|s| *s >= 0.0 && s.is_finite()),
            "noise.sigmas: must be non-negative".into(),
        );
        check(
            !self.scaling.ks.is_empty() && self.scaling.ks.iter().all(|&k| k >= 2),
            "scaling.ks: need lattice sizes of at least 2".into(),
        );
        check(self.scaling.n_heldout > 0, "scaling.n_heldout: must be positive".into());
        if self.dataset.source == SourceKind::Enumeration {
            check(self.k <= 4, "dataset.source: enumeration needs k ≤ 4".into());
        }
        let e = &self.er;
        check(e.k >= 2, "er.k: must be at least 2".into());
        check(e.e_max > 0.0 && e.e_max < 0.5, format!("er.e_max: {} outside (0, 0.5)", e.e_max));
        check(e.grid_points >= 10, "er.grid_points: need at least 10".into());
        check(e.n_trials >= 2, "er.n_trials: need at least 2".into());
        let ph = &self.phase;
        if let Err(err) = ph.model.validate() {
            check(false, format!("phase.model: {err}"));
        }
        check(ph.k_small >= 2 && ph.k_small < ph.k_large, "phase.k_small: must be ≥ 2 and below phase.k_large".into());
        check(
            ph.beta_min > 0.0 && ph.beta_min < ph.beta_max,
            "phase.beta_min: must be positive and below phase.beta_max".into(),
        );
        check(ph.n_beta >= 3, "phase.n_beta: need at least 3".into());
        check(ph.n_realizations > 0, "phase.n_realizations: must be positive".into());
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errs.join("\n")))
        }
    }

    pub fn backend(&self) -> BackendKind {
        match self.correction.backend {
            BackendKind::Auto if self.k <= 3 => BackendKind::Exact,
            BackendKind::Auto => BackendKind::Solvable,
            b => b,
        }
    }

    pub fn data_source(&self) -> DataSource {
        match self.dataset.source {
            SourceKind::MonteCarlo => DataSource::MonteCarlo(self.mc),
            SourceKind::Enumeration => DataSource::Enumeration,
        }
    }

    /// `--out`, then the config, then `$TORIC_LEARN_OUTPUT/<command>`, then
    /// `runs/<command>`.
    pub fn output_dir(&self, command: &str) -> PathBuf {
        if let Some(p) = &self.output {
            return p.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(command)
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && !is_tagged(slot) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Enum values serialized with a `kind` tag are replaced whole, never merged.
fn is_tagged(v: &Value) -> bool {
    v.get("kind").is_some_and(Value::is_string) && v.as_object().is_some_and(|m| m.len() <= 2)
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("{key}: malformed key")));
    }
    for part in &parts[..parts.len() - 1] {
        if !node.get(part).is_some_and(Value::is_object) {
            node.as_object_mut()
                .ok_or_else(|| CliError::Config(format!("{key}: {part} is not a section")))?
                .insert(part.to_string(), Value::Object(Map::new()));
        }
        node = node.get_mut(part).expect("just inserted");
    }
    node.as_object_mut()
        .ok_or_else(|| CliError::Config(format!("{key}: not a section")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn unknown_keys(defaults: &Value, user: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(d), Value::Object(u)) = (defaults, user) else {
        return;
    };
    if is_tagged(defaults) {
        return;
    }
    for (k, v) in u {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match d.get(k) {
            Some(dv) => unknown_keys(dv, v, &path, out),
            None => out.push(path),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::resolve(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.dataset.spec.n, 7450);
        assert_eq!(cfg.backend(), BackendKind::Exact);
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"k": 3, "seed": 5, "train": {"steps": 300}, "protocol": {"infer": {"deadband": 0.01}}}"#)
            .unwrap();
        let cfg = RunConfig::resolve(Some(&path), &[set("seed", "9"), set("dataset.source", "enumeration")]).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.steps, 300);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.protocol.infer.deadband, 0.01);
        assert_eq!(cfg.protocol.infer.b_max, 1.7);
        assert_eq!(cfg.dataset.source, SourceKind::Enumeration);
    }

    #[test]
    fn tagged_enums_are_replaced() {
        let cfg = RunConfig::resolve(
            None,
            &[set("phase.model", r#"{"kind": "bond_dilution", "parameter": 0.6}"#)],
        )
        .unwrap();
        assert_eq!(cfg.phase.model, DisorderModel::BondDilution(0.6));
        let cfg = RunConfig::resolve(None, &[set("dataset.draw", r#"{"multiscale": {"decades": 2}}"#)]).unwrap();
        assert_eq!(cfg.dataset.spec.draw, toric_learn::learner::FieldDraw::Multiscale { decades: 2.0 });
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::resolve(None, &[set("train.stepz", "3")]).unwrap_err();
        assert!(e.to_string().contains("train.stepz: unknown field"), "{e}");
        let e = RunConfig::resolve(None, &[set("train.steps", "\"many\"")]).unwrap_err();
        assert!(e.to_string().contains("train.steps"), "{e}");
        let e = RunConfig::resolve(None, &[set("k", "1"), set("protocol.damping", "2")]).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("k: must be at least 2") && msg.contains("protocol.damping"), "{msg}");
        let e = RunConfig::resolve(None, &[set("k", "5")]).unwrap_err();
        assert!(e.to_string().contains("correction.fields.kind"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn output_dir_precedence() {
        let mut cfg = RunConfig::default();
        cfg.output = Some(PathBuf::from("/x"));
        assert_eq!(cfg.output_dir("train"), PathBuf::from("/x"));
        cfg.output = None;
        assert!(cfg.output_dir("train").ends_with("train"));
    }
}
