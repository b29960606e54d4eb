//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use owninfer::acquisition::LoopParams;
use owninfer::conformal::{DEFAULT_ALPHA, DEFAULT_ALPHA_CP};
use owninfer::llm::OpenAiConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalConfig {
    pub alpha: f64,
    pub alpha_cp: f64,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            alpha_cp: DEFAULT_ALPHA_CP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed; the spec's own seed when absent.
    pub seed: Option<u64>,
    pub trials: usize,
    pub out: PathBuf,
    /// Scenario spec; the bundled household spec when absent.
    pub spec: Option<PathBuf>,
    /// Fixed dataset directory; when absent each trial generates its own.
    pub data_dir: Option<PathBuf>,
    /// Calibration model file; defaults to `<out>/calibration.json`.
    pub calibration: Option<PathBuf>,
    /// Labeled dataset to calibrate on instead of a generated one.
    pub calibration_data_dir: Option<PathBuf>,
    /// `oracle`, `scripted:<file>` or `console`.
    pub respondent: String,
    /// `heuristic`, `llm` or `replay:<file>`.
    pub scorer: String,
    pub ablation: String,
    pub q_max: Option<usize>,
    pub llm: OpenAiConfig,
    pub conformal: ConformalConfig,
    pub params: LoopParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            trials: 1,
            out: PathBuf::from("out"),
            spec: None,
            data_dir: None,
            calibration: None,
            calibration_data_dir: None,
            respondent: "oracle".into(),
            scorer: "heuristic".into(),
            ablation: "full".into(),
            q_max: None,
            llm: OpenAiConfig::default(),
            conformal: ConformalConfig::default(),
            params: LoopParams::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

/// Resolves the file part of `prefix<file>` against `base`.
fn resolve_prefixed(base: &Path, value: &str, prefix: &str) -> String {
    match value.strip_prefix(prefix) {
        Some(file) if Path::new(file).is_relative() => {
            format!("{prefix}{}", base.join(file).display())
        }
        _ => value.to_string(),
    }
}

impl RunConfig {
    /// Parses a config file; relative paths inside it are taken from its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut out = Some(cfg.out.clone());
        resolve(base, &mut out);
        cfg.out = out.expect("set above");
        for p in [
            &mut cfg.spec,
            &mut cfg.data_dir,
            &mut cfg.calibration,
            &mut cfg.calibration_data_dir,
        ] {
            resolve(base, p);
        }
        cfg.scorer = resolve_prefixed(base, &cfg.scorer, "replay:");
        cfg.respondent = resolve_prefixed(base, &cfg.respondent, "scripted:");
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = |m: String| Err(CliError::Validation(m));
        if self.trials == 0 {
            return v("trials must be at least 1".into());
        }
        for (name, x) in [
            ("alpha", self.conformal.alpha),
            ("alpha_cp", self.conformal.alpha_cp),
        ] {
            if !(x > 0.0 && x < 1.0) {
                return v(format!("conformal.{name} must lie in (0, 1), got {x}"));
            }
        }
        let p = &self.params;
        if let Err(e) = p.context.spatial.validate() {
            return v(format!("params.context.spatial: {e}"));
        }
        if p.context.similarity.k_sim == 0 {
            return v("params.context.similarity.k_sim must be positive".into());
        }
        if p.context.window_days.is_nan() || p.context.window_days <= 0.0 {
            return v("params.context.window_days must be positive".into());
        }
        if let Err(e) = p.share.validate() {
            return v(format!("params.share: {e}"));
        }
        if let Err(e) = p.heuristic.weights.validate() {
            return v(format!("params.heuristic.weights: {e}"));
        }
        if p.heuristic.tau_days.is_nan() || p.heuristic.tau_days <= 0.0 {
            return v("params.heuristic.tau_days must be positive".into());
        }
        if !(p.confidence_threshold > 0.5 && p.confidence_threshold <= 1.0) {
            return v("params.confidence_threshold must lie in (0.5, 1]".into());
        }
        for (name, path) in [
            ("spec", &self.spec),
            ("data_dir", &self.data_dir),
            ("calibration_data_dir", &self.calibration_data_dir),
        ] {
            if let Some(path) = path {
                if !path.exists() {
                    return v(format!("{name} {} does not exist", path.display()));
                }
            }
        }
        Ok(())
    }

    pub fn calibration_path(&self) -> PathBuf {
        self.calibration
            .clone()
            .unwrap_or_else(|| self.out.join("calibration.json"))
    }
}
