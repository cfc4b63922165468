//! Assembles group, representations, architecture, subspace, and dataset
//! from a parsed RunConfig into the RiskContext the dynamics run on.

use std::sync::Arc;

use crate::config::{RunConfig, SupportSpec};
use crate::data::{read_idx, synth_asymmetric_task, synth_invariant_task, Dataset};
use crate::dynamics::{DynamicsConfig, FlowMode, Integrator, RiskContext};
use crate::error::{EqError, Result};
use crate::group::{FiniteGroup, Representation};
use crate::net::{Architecture, LossKind, Nonlinearity};
use crate::subspaces::{
    conv_subspace, cross_support, full_3x3_support, AffineSubspace, EquivariantStructure,
    LayerSubspace,
};

fn parse_nonlinearity(s: &str) -> Result<Nonlinearity> {
    match s {
        "tanh" => Ok(Nonlinearity::Tanh),
        "relu" => Ok(Nonlinearity::Relu),
        "identity" => Ok(Nonlinearity::Identity),
        other => Err(EqError::Config(format!("unknown nonlinearity {other:?}"))),
    }
}

fn parse_loss(s: &str) -> Result<LossKind> {
    match s {
        "cross_entropy" => Ok(LossKind::CrossEntropy),
        "mse" => Ok(LossKind::Mse),
        other => Err(EqError::Config(format!("unknown loss {other:?}"))),
    }
}

fn parse_integrator(s: &str) -> Result<Integrator> {
    match s {
        "euler" => Ok(Integrator::Euler),
        "rk4" => Ok(Integrator::Rk4),
        other => Err(EqError::Config(format!("unknown integrator {other:?}"))),
    }
}

pub fn support_taps(cfg: &RunConfig) -> Result<Vec<(i64, i64)>> {
    match &cfg.subspace.support {
        None | Some(SupportSpec::Named(_)) => {
            match cfg.subspace.support.as_ref() {
                Some(SupportSpec::Named(n)) if n == "cross" => Ok(cross_support()),
                _ => Ok(full_3x3_support()),
            }
        }
        Some(SupportSpec::Taps(taps)) => {
            if taps.is_empty() {
                return Err(EqError::Config("support tap list must be non-empty".into()));
            }
            Ok(taps.clone())
        }
    }
}

pub fn build_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let h = cfg.network.height;
    match cfg.dataset.dataset.as_str() {
        "synth_inv" => synth_invariant_task(cfg.dataset.limit, h, cfg.dataset.seed),
        "synth_asym" => synth_asymmetric_task(cfg.dataset.limit, h, cfg.dataset.seed),
        "idx" => read_idx(
            cfg.dataset.idx_images.as_ref().unwrap(),
            cfg.dataset.idx_labels.as_ref().unwrap(),
            cfg.dataset.limit,
        ),
        other => Err(EqError::Config(format!("unknown dataset {other:?}"))),
    }
}

/// Builds the full context: conv (or dense) stages over the grid for each
/// channel transition, then a dense head to `num_classes` with trivial output
/// action. Both the representations and the architecture follow the same
/// channel-major grid layout.
pub fn build_context(cfg: &RunConfig) -> Result<RiskContext> {
    let dataset = build_dataset(cfg)?;
    build_context_with_dataset(cfg, dataset)
}

pub fn build_context_with_dataset(cfg: &RunConfig, dataset: Dataset) -> Result<RiskContext> {
    let (h, w) = (cfg.network.height, cfg.network.width);
    if dataset.input_shape != (h, w, cfg.network.channels[0]) {
        return Err(EqError::Config(format!(
            "dataset shape {:?} does not match network {}×{}×{}",
            dataset.input_shape, h, w, cfg.network.channels[0]
        )));
    }
    let num_classes = dataset.num_classes;
    let order = cfg.group.group_order;
    let group = Arc::new(FiniteGroup::cyclic(order)?);

    let grid_rep = |ch: usize| -> Result<Arc<Representation>> {
        let dim = h * w * ch;
        match cfg.group.action.as_str() {
            "rotate90" => Ok(Arc::new(Representation::rotation_on_grid(group.clone(), h, w, ch)?)),
            "trivial" => Ok(Arc::new(Representation::trivial(group.clone(), dim)?)),
            "permutation" => {
                let perms = cfg.group.permutations.clone().unwrap();
                if perms.len() != order || perms.iter().any(|p| p.len() != dim) {
                    return Err(EqError::Config(format!(
                        "permutations must give {order} permutations of {dim} indices"
                    )));
                }
                let rep = Representation::from_perms(group.clone(), dim, perms);
                rep.validate(1e-12)?;
                Ok(Arc::new(rep))
            }
            other => Err(EqError::Config(format!("unknown action {other:?}"))),
        }
    };

    let ch = &cfg.network.channels;
    let mut reps: Vec<Arc<Representation>> = Vec::with_capacity(ch.len() + 1);
    let mut dims: Vec<usize> = Vec::with_capacity(ch.len() + 1);
    let mut layers: Vec<LayerSubspace> = Vec::with_capacity(ch.len());
    for (i, &c) in ch.iter().enumerate() {
        reps.push(grid_rep(c)?);
        dims.push(h * w * c);
        if i > 0 {
            layers.push(match cfg.subspace.subspace.as_str() {
                "conv" => conv_subspace(h, w, ch[i - 1], c, &support_taps(cfg)?)?,
                _ => LayerSubspace::Full { rows: h * w * c, cols: h * w * ch[i - 1] },
            });
        }
    }
    // dense invariant head
    reps.push(Arc::new(Representation::trivial(group, num_classes)?));
    layers.push(LayerSubspace::Full { rows: num_classes, cols: *dims.last().unwrap() });
    dims.push(num_classes);

    let structure = Arc::new(EquivariantStructure::new(reps, AffineSubspace::linear(layers))?);
    let nl = parse_nonlinearity(&cfg.network.nonlinearity)?;
    let mut nls = vec![nl; dims.len() - 1];
    *nls.last_mut().unwrap() = Nonlinearity::Identity;
    let arch = Architecture::new(dims, nls, parse_loss(&cfg.network.loss)?)?;
    RiskContext::new(arch, structure, dataset, cfg.flow.gamma)
}

/// Same architecture family with an orientation-biased 4-class dataset;
/// used as the negative control for the invariance check.
pub fn build_asym_control(cfg: &RunConfig) -> Result<RiskContext> {
    let mut c = cfg.clone();
    c.dataset.dataset = "synth_asym".into();
    build_context(&c)
}

pub fn build_dynamics_config(cfg: &RunConfig) -> Result<DynamicsConfig> {
    let dc = DynamicsConfig {
        mode: FlowMode::parse(&cfg.flow.mode)?,
        integrator: parse_integrator(&cfg.flow.integrator)?,
        step_size: cfg.flow.step_size,
        num_steps: cfg.flow.num_steps,
        record_every: cfg.flow.record_every.max(1),
        seed: cfg.flow.seed,
    };
    dc.validate()?;
    Ok(dc)
}
