//! Run configuration: a TOML file with `[section]` headers and `key = value`
//! lines. Unknown keys are hard errors; parse failures carry the line number
//! from the underlying parser.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{EqError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub group: GroupSection,
    pub subspace: SubspaceSection,
    pub network: NetworkSection,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSection {
    /// only "cyclic" is implemented
    pub group: String,
    pub group_order: usize,
    /// "rotate90" | "trivial" | "permutation"
    pub action: String,
    /// explicit permutations of the input grid when action = "permutation":
    /// one permutation per group element, each a vector of destination indices
    #[serde(default)]
    pub permutations: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceSection {
    /// "dense" | "conv"
    pub subspace: String,
    /// "full3x3" | "cross" | explicit tap list [[dr, dc], ...]
    #[serde(default)]
    pub support: Option<SupportSpec>,
    /// only "circular" is accepted
    #[serde(default = "default_padding")]
    pub padding: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SupportSpec {
    Named(String),
    Taps(Vec<(i64, i64)>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub height: usize,
    pub width: usize,
    /// channel counts per feature space, starting at the input (e.g. [1, 2]
    /// = one conv stage from 1 to 2 channels); a dense head to `num_classes`
    /// with trivial output action is appended automatically
    pub channels: Vec<usize>,
    /// "tanh" | "relu" | "identity", applied to every hidden layer
    #[serde(default = "default_nonlinearity")]
    pub nonlinearity: String,
    /// "cross_entropy" | "mse"
    #[serde(default = "default_loss")]
    pub loss: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// "synth_inv" | "synth_asym" | "idx"
    pub dataset: String,
    #[serde(default)]
    pub idx_images: Option<PathBuf>,
    #[serde(default)]
    pub idx_labels: Option<PathBuf>,
    /// sample count for synthetic sources; truncation limit for idx
    #[serde(default = "default_limit")]
    pub limit: usize,
    #[serde(default = "default_data_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    /// "nominal" | "augmented" | "equivariant" | "regularized_augmented"
    pub mode: String,
    pub gamma: f64,
    /// "euler" | "rk4"
    pub integrator: String,
    pub step_size: f64,
    pub num_steps: usize,
    pub record_every: usize,
    pub seed: u64,
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection {
            mode: "augmented".into(),
            gamma: 0.0,
            integrator: "euler".into(),
            step_size: 1e-2,
            num_steps: 500,
            record_every: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub gamma_list: Vec<f64>,
    /// scale of the T E⊥ Gaussian noise added when initializing
    /// non-equivariant runs from the shared equivariant draw
    pub perturb_scale: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            lr: 1e-3,
            batch_size: 10,
            epochs: 2,
            seeds: vec![0, 1, 2, 3, 4],
            gamma_list: vec![1e-4, 1e-2, 1e0, 1e2],
            perturb_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_padding() -> String {
    "circular".into()
}
fn default_nonlinearity() -> String {
    "tanh".into()
}
fn default_loss() -> String {
    "cross_entropy".into()
}
fn default_limit() -> usize {
    64
}
fn default_data_seed() -> u64 {
    42
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| EqError::Config(e.to_string().trim_end().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            EqError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        RunConfig::from_str(&text)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(EqError::Config(msg));
        if self.group.group != "cyclic" {
            return fail(format!("unsupported group {:?} (only \"cyclic\")", self.group.group));
        }
        if self.group.group_order == 0 {
            return fail("group_order must be positive".into());
        }
        match self.group.action.as_str() {
            "rotate90" => {
                if self.group.group_order != 4 {
                    return fail("action = \"rotate90\" requires group_order = 4".into());
                }
                if self.network.height != self.network.width {
                    return fail("action = \"rotate90\" requires a square grid".into());
                }
            }
            "trivial" => {}
            "permutation" => {
                if self.group.permutations.is_none() {
                    return fail("action = \"permutation\" requires the permutations key".into());
                }
            }
            other => return fail(format!("unknown action {other:?}")),
        }
        match self.subspace.subspace.as_str() {
            "dense" => {}
            "conv" => {
                if self.subspace.padding != "circular" {
                    return fail(format!(
                        "padding {:?} not supported (only \"circular\")",
                        self.subspace.padding
                    ));
                }
            }
            other => return fail(format!("unknown subspace {other:?}")),
        }
        if let Some(SupportSpec::Named(name)) = &self.subspace.support {
            if name != "full3x3" && name != "cross" {
                return fail(format!("unknown support {name:?}"));
            }
        }
        if self.network.channels.len() < 2 {
            return fail("channels must list at least input and one feature stage".into());
        }
        match self.network.nonlinearity.as_str() {
            "tanh" | "relu" | "identity" => {}
            other => return fail(format!("unknown nonlinearity {other:?}")),
        }
        match self.network.loss.as_str() {
            "cross_entropy" | "mse" => {}
            other => return fail(format!("unknown loss {other:?}")),
        }
        match self.dataset.dataset.as_str() {
            "synth_inv" | "synth_asym" => {}
            "idx" => {
                if self.dataset.idx_images.is_none() || self.dataset.idx_labels.is_none() {
                    return fail("dataset = \"idx\" requires idx_images and idx_labels".into());
                }
            }
            other => return fail(format!("unknown dataset {other:?}")),
        }
        if self.flow.step_size <= 0.0 || self.flow.gamma < 0.0 {
            return fail("flow step_size must be positive and gamma non-negative".into());
        }
        match self.flow.mode.as_str() {
            "nominal" | "augmented" | "equivariant" | "regularized_augmented" => {}
            other => return fail(format!("unknown flow mode {other:?}")),
        }
        match self.flow.integrator.as_str() {
            "euler" | "rk4" => {}
            other => return fail(format!("unknown integrator {other:?}")),
        }
        if self.train.lr <= 0.0 || self.train.batch_size == 0 {
            return fail("train lr must be positive and batch_size at least 1".into());
        }
        if self.train.seeds.is_empty() || self.train.gamma_list.is_empty() {
            return fail("train seeds and gamma_list must be non-empty".into());
        }
        if self.train.gamma_list.iter().any(|&g| g < 0.0) {
            return fail("gamma_list entries must be non-negative".into());
        }
        Ok(())
    }
}

/// The default desk-scale configuration: C4 rotations on a 5×5 grid, one
/// 3×3 conv stage, dense invariant head, synthetic invariant task.
pub fn default_config_text() -> &'static str {
    r#"[group]
group = "cyclic"
group_order = 4
action = "rotate90"

[subspace]
subspace = "conv"
support = "full3x3"
padding = "circular"

[network]
height = 5
width = 5
channels = [1, 2]
nonlinearity = "tanh"
loss = "cross_entropy"

[dataset]
dataset = "synth_inv"
limit = 64
seed = 42

[flow]
mode = "augmented"
gamma = 0.0
integrator = "euler"
step_size = 1e-2
num_steps = 500
record_every = 10
seed = 0

[train]
lr = 1e-3
batch_size = 10
epochs = 2
seeds = [0, 1, 2, 3, 4]
gamma_list = [1e-4, 1e-2, 1e0, 1e2]
perturb_scale = 0.1
"#
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_parses_and_validates() {
        let cfg = RunConfig::from_str(default_config_text()).unwrap();
        assert_eq!(cfg.group.group_order, 4);
        assert_eq!(cfg.network.channels, vec![1, 2]);
        assert_eq!(cfg.train.gamma_list.len(), 4);
        assert_eq!(cfg.output.output_dir, None);
    }

    #[test]
    fn unknown_key_is_a_hard_error_with_location() {
        let bad = default_config_text().replace("lr = 1e-3", "lr = 1e-3\nmomentum = 0.9");
        let err = RunConfig::from_str(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("momentum"), "{msg}");
        assert!(msg.contains("line"), "parser location missing: {msg}");
    }

    #[test]
    fn syntax_error_reports_line_number() {
        let bad = default_config_text().replace("group_order = 4", "group_order = =");
        let err = RunConfig::from_str(&bad).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn rotate90_requires_order_four() {
        let bad = default_config_text().replace("group_order = 4", "group_order = 3");
        assert!(RunConfig::from_str(&bad).is_err());
    }

    #[test]
    fn non_circular_padding_rejected() {
        let bad = default_config_text().replace("padding = \"circular\"", "padding = \"zero\"");
        assert!(RunConfig::from_str(&bad).is_err());
    }

    #[test]
    fn explicit_tap_list_accepted() {
        let cfg_text =
            default_config_text().replace("support = \"full3x3\"", "support = [[0, 0], [0, 1]]");
        let cfg = RunConfig::from_str(&cfg_text).unwrap();
        match cfg.subspace.support {
            Some(SupportSpec::Taps(t)) => assert_eq!(t, vec![(0, 0), (0, 1)]),
            other => panic!("unexpected support {other:?}"),
        }
    }

    #[test]
    fn idx_dataset_requires_paths() {
        let bad = default_config_text().replace("dataset = \"synth_inv\"", "dataset = \"idx\"");
        assert!(RunConfig::from_str(&bad).is_err());
    }
}
