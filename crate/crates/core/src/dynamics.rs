//! Nominal, augmented and regularized risks, their gradients, the projected
//! gradient-flow dynamics, the SGD-with-random-augmentation trainer, and
//! finite-difference Hessian-vector products.
//!
//! Expectations over the group are exact uniform sums in the flow modes; the
//! SGD trainer draws one group element per sample per step instead, matching
//! how augmentation is done in practice. Summation order is fixed
//! (sample-major, then element index) so results are run-to-run deterministic.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{EqError, Result};
use crate::net::{forward, grad_sample, loss, Architecture, LabeledSample, LossKind, Nonlinearity, ParamPoint};
use crate::subspaces::EquivariantStructure;

/// Parameter norm beyond which a trajectory is declared divergent.
pub const DIVERGENCE_GUARD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMode {
    Nominal,
    Augmented,
    Equivariant,
    RegularizedAugmented,
}

impl FlowMode {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "nominal" => FlowMode::Nominal,
            "augmented" => FlowMode::Augmented,
            "equivariant" => FlowMode::Equivariant,
            "regularized_augmented" => FlowMode::RegularizedAugmented,
            other => {
                return Err(EqError::InvalidArgument(format!("unknown mode `{other}`")));
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            FlowMode::Nominal => "nominal",
            FlowMode::Augmented => "augmented",
            FlowMode::Equivariant => "equivariant",
            FlowMode::RegularizedAugmented => "regularized_augmented",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    Rk4,
}

/// Everything a risk evaluation needs: the architecture, the equivariant
/// structure carrying the projections, the empirical dataset and γ.
#[derive(Debug, Clone)]
pub struct RiskContext {
    pub arch: Architecture,
    pub structure: Arc<EquivariantStructure>,
    pub dataset: Dataset,
    pub gamma: f64,
}

impl RiskContext {
    pub fn new(
        arch: Architecture,
        structure: Arc<EquivariantStructure>,
        dataset: Dataset,
        gamma: f64,
    ) -> Result<Self> {
        if dataset.samples.is_empty() {
            return Err(EqError::InvalidArgument("dataset must be non-empty".into()));
        }
        if gamma < 0.0 {
            return Err(EqError::InvalidArgument("gamma must be non-negative".into()));
        }
        if dataset.input_dim() != arch.input_dim() {
            return Err(EqError::InvalidArgument(format!(
                "dataset input dim {} vs architecture {}",
                dataset.input_dim(),
                arch.input_dim()
            )));
        }
        Ok(RiskContext { arch, structure, dataset, gamma })
    }

    pub fn with_gamma(&self, gamma: f64) -> RiskContext {
        let mut c = self.clone();
        c.gamma = gamma;
        c
    }

    fn rep_in(&self) -> &crate::group::Representation {
        &self.structure.reps[0]
    }

    fn rep_out(&self) -> &crate::group::Representation {
        self.structure.reps.last().unwrap()
    }

    fn transformed(&self, s: &LabeledSample, g: usize) -> LabeledSample {
        LabeledSample {
            input: self.rep_in().apply(g, &s.input),
            target: self.rep_out().apply(g, &s.target),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DynamicsConfig {
    pub mode: FlowMode,
    pub integrator: Integrator,
    pub step_size: f64,
    pub num_steps: usize,
    pub record_every: usize,
    pub seed: u64,
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_size <= 0.0 {
            return Err(EqError::InvalidArgument("step size must be positive".into()));
        }
        if self.num_steps == 0 {
            return Err(EqError::InvalidArgument("num_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-step telemetry. Flow trajectories carry exact dataset risks; SGD
/// trajectories carry minibatch estimates in the risk columns (dist_E and
/// param_norm are always exact).
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub time: f64,
    pub dist_e: f64,
    pub risk: f64,
    pub aug_risk: f64,
    pub reg_loss: f64,
    pub param_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Diverged { step: usize },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub final_point: ParamPoint,
    pub status: RunStatus,
}

/// R(A): mean loss over the dataset.
pub fn nominal_risk(ctx: &RiskContext, a: &ParamPoint) -> Result<f64> {
    let mut acc = 0.0;
    for s in &ctx.dataset.samples {
        let (out, _) = forward(&ctx.arch, a, &s.input)?;
        acc += loss(&ctx.arch, &out, &s.target)?;
    }
    Ok(acc / ctx.dataset.samples.len() as f64)
}

/// R^aug(A): exact double mean over the group and the dataset.
pub fn augmented_risk(ctx: &RiskContext, a: &ParamPoint) -> Result<f64> {
    let order = ctx.rep_in().group.order;
    let mut acc = 0.0;
    for s in &ctx.dataset.samples {
        for g in 0..order {
            let t = ctx.transformed(s, g);
            let (out, _) = forward(&ctx.arch, a, &t.input)?;
            acc += loss(&ctx.arch, &out, &t.target)?;
        }
    }
    Ok(acc / (ctx.dataset.samples.len() * order) as f64)
}

/// ∇R(A), unprojected.
pub fn grad_nominal(ctx: &RiskContext, a: &ParamPoint) -> Result<ParamPoint> {
    let mut acc = ParamPoint::zeros(&ctx.arch);
    for s in &ctx.dataset.samples {
        let g = grad_sample(&ctx.arch, a, s)?;
        acc.axpy(1.0, &g);
    }
    Ok(acc.scale(1.0 / ctx.dataset.samples.len() as f64))
}

/// ∇R^aug(A), unprojected: exact mean of per-sample, per-element gradients.
pub fn grad_augmented(ctx: &RiskContext, a: &ParamPoint) -> Result<ParamPoint> {
    let order = ctx.rep_in().group.order;
    let mut acc = ParamPoint::zeros(&ctx.arch);
    for s in &ctx.dataset.samples {
        for g in 0..order {
            let t = ctx.transformed(s, g);
            let grad = grad_sample(&ctx.arch, a, &t)?;
            acc.axpy(1.0, &grad);
        }
    }
    Ok(acc.scale(1.0 / (ctx.dataset.samples.len() * order) as f64))
}

/// S_γ(A) = R^aug(A) + γ/2 ‖Π_{E⊥}A‖².
pub fn regularized_loss(ctx: &RiskContext, a: &ParamPoint) -> Result<f64> {
    let d = ctx.structure.distance_to_e(a)?;
    Ok(augmented_risk(ctx, a)? + 0.5 * ctx.gamma * d * d)
}

/// Right-hand side of the selected gradient flow.
pub fn flow_rhs(ctx: &RiskContext, mode: FlowMode, a: &ParamPoint) -> Result<ParamPoint> {
    Ok(match mode {
        FlowMode::Nominal => ctx.structure.project_l(&grad_nominal(ctx, a)?).scale(-1.0),
        FlowMode::Augmented => ctx.structure.project_l(&grad_augmented(ctx, a)?).scale(-1.0),
        FlowMode::Equivariant => ctx.structure.project_e(&grad_nominal(ctx, a)?)?.scale(-1.0),
        FlowMode::RegularizedAugmented => {
            let mut rhs = ctx.structure.project_l(&grad_augmented(ctx, a)?).scale(-1.0);
            rhs.axpy(-ctx.gamma, &ctx.structure.project_e_perp(a)?);
            rhs
        }
    })
}

fn record(ctx: &RiskContext, step: usize, time: f64, a: &ParamPoint) -> Result<TrajectoryRecord> {
    let dist = ctx.structure.distance_to_e(a)?;
    let risk = nominal_risk(ctx, a)?;
    let aug = augmented_risk(ctx, a)?;
    Ok(TrajectoryRecord {
        step,
        time,
        dist_e: dist,
        risk,
        aug_risk: aug,
        reg_loss: aug + 0.5 * ctx.gamma * dist * dist,
        param_norm: a.norm(),
    })
}

/// Fixed-step integration of the selected flow. The state is projected onto
/// L once at t = 0; every RHS lies in T L by construction afterwards.
pub fn integrate(ctx: &RiskContext, config: &DynamicsConfig, a0: &ParamPoint) -> Result<Trajectory> {
    config.validate()?;
    let h = config.step_size;
    let every = config.record_every.max(1);
    let mut a = ctx.structure.project_l(a0);
    if config.mode == FlowMode::Equivariant {
        a = ctx.structure.project_e(&a)?;
    }
    let mut records = vec![record(ctx, 0, 0.0, &a)?];
    for step in 1..=config.num_steps {
        match config.integrator {
            Integrator::Euler => {
                let k = flow_rhs(ctx, config.mode, &a)?;
                a.axpy(h, &k);
            }
            Integrator::Rk4 => {
                let k1 = flow_rhs(ctx, config.mode, &a)?;
                let mut a2 = a.clone();
                a2.axpy(0.5 * h, &k1);
                let k2 = flow_rhs(ctx, config.mode, &a2)?;
                let mut a3 = a.clone();
                a3.axpy(0.5 * h, &k2);
                let k3 = flow_rhs(ctx, config.mode, &a3)?;
                let mut a4 = a.clone();
                a4.axpy(h, &k3);
                let k4 = flow_rhs(ctx, config.mode, &a4)?;
                a.axpy(h / 6.0, &k1);
                a.axpy(h / 3.0, &k2);
                a.axpy(h / 3.0, &k3);
                a.axpy(h / 6.0, &k4);
            }
        }
        if a.norm() > DIVERGENCE_GUARD {
            return Ok(Trajectory {
                records,
                final_point: a,
                status: RunStatus::Diverged { step },
            });
        }
        if step % every == 0 || step == config.num_steps {
            records.push(record(ctx, step, step as f64 * h, &a)?);
        }
    }
    Ok(Trajectory { records, final_point: a, status: RunStatus::Completed })
}

/// SGD with one uniformly random augmentation draw per sample per step.
/// Equivariant mode keeps the iterate on E by projecting the update; the
/// other modes apply Π_L to the minibatch gradient and, when γ > 0, the
/// −γ Π_{E⊥}A regularizer term. dist_E is recorded after every step.
pub fn sgd_train(
    ctx: &RiskContext,
    mode: FlowMode,
    lr: f64,
    batch_size: usize,
    epochs: usize,
    seed: u64,
    a0: &ParamPoint,
) -> Result<Trajectory> {
    if lr <= 0.0 {
        return Err(EqError::InvalidArgument("learning rate must be positive".into()));
    }
    if batch_size == 0 {
        return Err(EqError::InvalidArgument("batch size must be at least 1".into()));
    }
    let n = ctx.dataset.samples.len();
    let order = ctx.rep_in().group.order;
    let augmenting = matches!(mode, FlowMode::Augmented | FlowMode::RegularizedAugmented);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = ctx.structure.project_l(a0);
    if mode == FlowMode::Equivariant {
        a = ctx.structure.project_e(&a)?;
    }
    let mut records = Vec::new();
    records.push(TrajectoryRecord {
        step: 0,
        time: 0.0,
        dist_e: ctx.structure.distance_to_e(&a)?,
        risk: f64::NAN,
        aug_risk: f64::NAN,
        reg_loss: f64::NAN,
        param_norm: a.norm(),
    });
    let mut step = 0usize;
    let mut indices: Vec<usize> = (0..n).collect();
    for _epoch in 0..epochs {
        indices.shuffle(&mut rng);
        for batch in indices.chunks(batch_size) {
            step += 1;
            let mut grad = ParamPoint::zeros(&ctx.arch);
            let mut batch_loss = 0.0;
            for &idx in batch {
                let draw =
                    if augmenting && order > 1 { rng.random_range(0..order) } else { 0 };
                let s = ctx.transformed(&ctx.dataset.samples[idx], draw);
                let (out, _) = forward(&ctx.arch, &a, &s.input)?;
                batch_loss += loss(&ctx.arch, &out, &s.target)?;
                grad.axpy(1.0, &grad_sample(&ctx.arch, &a, &s)?);
            }
            let scale = 1.0 / batch.len() as f64;
            let grad = grad.scale(scale);
            batch_loss *= scale;
            let dist;
            match mode {
                FlowMode::Equivariant => {
                    a.axpy(-lr, &ctx.structure.project_e(&grad)?);
                    dist = ctx.structure.distance_to_e(&a)?;
                }
                _ => {
                    a.axpy(-lr, &ctx.structure.project_l(&grad));
                    if ctx.gamma > 0.0 {
                        let perp = ctx.structure.project_e_perp(&a)?;
                        a.axpy(-lr * ctx.gamma, &perp);
                    }
                    dist = ctx.structure.distance_to_e(&a)?;
                }
            }
            if a.norm() > DIVERGENCE_GUARD {
                return Ok(Trajectory {
                    records,
                    final_point: a,
                    status: RunStatus::Diverged { step },
                });
            }
            records.push(TrajectoryRecord {
                step,
                time: step as f64 * lr,
                dist_e: dist,
                risk: batch_loss,
                aug_risk: batch_loss,
                reg_loss: batch_loss + 0.5 * ctx.gamma * dist * dist,
                param_norm: a.norm(),
            });
        }
    }
    Ok(Trajectory { records, final_point: a, status: RunStatus::Completed })
}

fn hvp_step(a: &ParamPoint, y: &ParamPoint) -> f64 {
    1e-4 * (1.0 + a.norm()) / (1.0 + y.norm())
}

/// Central-difference Hessian-vector product of the augmented risk.
pub fn hvp_augmented(ctx: &RiskContext, a: &ParamPoint, y: &ParamPoint) -> Result<ParamPoint> {
    if y.norm() == 0.0 {
        return Ok(ParamPoint::zeros(&ctx.arch));
    }
    let eps = hvp_step(a, y);
    let mut plus = a.clone();
    plus.axpy(eps, y);
    let mut minus = a.clone();
    minus.axpy(-eps, y);
    Ok(grad_augmented(ctx, &plus)?.sub(&grad_augmented(ctx, &minus)?).scale(0.5 / eps))
}

/// Central-difference Hessian-vector product of the nominal risk.
pub fn hvp_nominal(ctx: &RiskContext, a: &ParamPoint, y: &ParamPoint) -> Result<ParamPoint> {
    if y.norm() == 0.0 {
        return Ok(ParamPoint::zeros(&ctx.arch));
    }
    let eps = hvp_step(a, y);
    let mut plus = a.clone();
    plus.axpy(eps, y);
    let mut minus = a.clone();
    minus.axpy(-eps, y);
    Ok(grad_nominal(ctx, &plus)?.sub(&grad_nominal(ctx, &minus)?).scale(0.5 / eps))
}

/// Exact Hessian-vector product for the single-layer linear mse model, where
/// the risk is quadratic: HVP(Y) = Y·M with M the (group-averaged) second
/// moment of the inputs.
pub fn hvp_exact_linear(ctx: &RiskContext, y: &ParamPoint, augmented: bool) -> Result<ParamPoint> {
    if ctx.arch.num_layers() != 1
        || ctx.arch.nonlinearities[0] != Nonlinearity::Identity
        || ctx.arch.loss != LossKind::Mse
    {
        return Err(EqError::InvalidArgument(
            "exact HVP is defined for the single-layer linear mse model only".into(),
        ));
    }
    let m = second_moment(ctx, augmented);
    Ok(ParamPoint { layers: vec![&y.layers[0] * m] })
}

/// (1/N) Σ x xᵀ, optionally averaged over the group action on inputs.
pub fn second_moment(ctx: &RiskContext, augmented: bool) -> nalgebra::DMatrix<f64> {
    let d = ctx.arch.input_dim();
    let mut m = nalgebra::DMatrix::zeros(d, d);
    let order = if augmented { ctx.rep_in().group.order } else { 1 };
    for s in &ctx.dataset.samples {
        for g in 0..order {
            let x = ctx.rep_in().apply(g, &s.input);
            m += &x * x.transpose();
        }
    }
    m / (ctx.dataset.samples.len() * order) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_invariant_task;
    use crate::group::{FiniteGroup, Representation};
    use crate::subspaces::{conv_subspace, AffineSubspace, EquivariantStructure, LayerSubspace};
    use nalgebra::{DMatrix, DVector};

    fn full_3x3() -> Vec<(i64, i64)> {
        let mut v = Vec::new();
        for dr in -1..=1 {
            for dc in -1..=1 {
                v.push((dr, dc));
            }
        }
        v
    }

    /// conv(3×3)+C4 invariant classifier on an h×h grid.
    fn conv_ctx(h: usize, mid_ch: usize, gamma: f64) -> RiskContext {
        let group = Arc::new(FiniteGroup::cyclic(4).unwrap());
        let r0 = Arc::new(Representation::rotation_on_grid(group.clone(), h, h, 1).unwrap());
        let r1 = Arc::new(Representation::rotation_on_grid(group.clone(), h, h, mid_ch).unwrap());
        let r2 = Arc::new(Representation::trivial(group.clone(), 2).unwrap());
        let sub = AffineSubspace::linear(vec![
            conv_subspace(h, h, 1, mid_ch, &full_3x3()).unwrap(),
            LayerSubspace::Full { rows: 2, cols: h * h * mid_ch },
        ]);
        let structure = Arc::new(EquivariantStructure::new(vec![r0, r1, r2], sub).unwrap());
        let arch = Architecture::new(
            vec![h * h, h * h * mid_ch, 2],
            vec![Nonlinearity::Tanh, Nonlinearity::Identity],
            LossKind::CrossEntropy,
        )
        .unwrap();
        let ds = synth_invariant_task(8, h, 42).unwrap();
        RiskContext::new(arch, structure, ds, gamma).unwrap()
    }

    /// single-layer linear mse toy with a trivial group (full space L).
    fn linear_ctx(seed: u64) -> RiskContext {
        let group = Arc::new(FiniteGroup::cyclic(1).unwrap());
        let r0 = Arc::new(Representation::trivial(group.clone(), 3).unwrap());
        let r1 = Arc::new(Representation::trivial(group, 2).unwrap());
        let sub = AffineSubspace::linear(vec![LayerSubspace::Full { rows: 2, cols: 3 }]);
        let structure = Arc::new(EquivariantStructure::new(vec![r0, r1], sub).unwrap());
        let arch = Architecture::new(vec![3, 2], vec![Nonlinearity::Identity], LossKind::Mse).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..6)
            .map(|_| LabeledSample {
                input: DVector::from_fn(3, |_, _| rng.random::<f64>() * 2.0 - 1.0),
                target: DVector::from_fn(2, |_, _| rng.random::<f64>() * 2.0 - 1.0),
            })
            .collect();
        let ds = Dataset { samples, input_shape: (3, 1, 1), num_classes: 2 };
        RiskContext::new(arch, structure, ds, 0.0).unwrap()
    }

    fn random_params(ctx: &RiskContext, seed: u64) -> ParamPoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ctx.structure.sample_gaussian(&mut rng, |_| 0.5)
    }

    #[test]
    fn nominal_risk_matches_per_sample_accumulation() {
        let ctx = conv_ctx(3, 2, 0.0);
        let a = random_params(&ctx, 1);
        let r = nominal_risk(&ctx, &a).unwrap();
        let mut acc = 0.0;
        for s in &ctx.dataset.samples {
            let (out, _) = forward(&ctx.arch, &a, &s.input).unwrap();
            acc += loss(&ctx.arch, &out, &s.target).unwrap();
        }
        assert!((r - acc / 8.0).abs() < 1e-14);
    }

    #[test]
    fn augmented_risk_with_trivial_group_is_nominal() {
        let ctx = linear_ctx(2);
        let a = random_params(&ctx, 2);
        let r = nominal_risk(&ctx, &a).unwrap();
        let ra = augmented_risk(&ctx, &a).unwrap();
        assert!((r - ra).abs() < 1e-14);
        let gn = grad_nominal(&ctx, &a).unwrap();
        let ga = grad_augmented(&ctx, &a).unwrap();
        assert!(gn.sub(&ga).norm() < 1e-14);
    }

    #[test]
    fn augmented_risk_equals_nominal_on_symmetrized_dataset() {
        let ctx = conv_ctx(3, 2, 0.0);
        let a = random_params(&ctx, 3);
        let sym = crate::data::symmetrize(
            &ctx.dataset,
            &ctx.structure.reps[0],
            ctx.structure.reps.last().unwrap(),
        )
        .unwrap();
        let mut ctx_sym = ctx.clone();
        ctx_sym.dataset = sym;
        let lhs = augmented_risk(&ctx, &a).unwrap();
        let rhs = nominal_risk(&ctx_sym, &a).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn augmented_risk_invariant_under_dataset_shift() {
        let ctx = conv_ctx(3, 2, 0.0);
        let a = random_params(&ctx, 4);
        let base = augmented_risk(&ctx, &a).unwrap();
        for h in 0..4 {
            let mut shifted = ctx.clone();
            for s in &mut shifted.dataset.samples {
                s.input = ctx.structure.reps[0].apply(h, &s.input);
                s.target = ctx.structure.reps.last().unwrap().apply(h, &s.target);
            }
            let r = augmented_risk(&shifted, &a).unwrap();
            assert!((r - base).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences_of_risks() {
        let ctx = conv_ctx(3, 1, 0.0);
        let a = random_params(&ctx, 5);
        let eps = 1e-5;
        for augmented in [false, true] {
            let grad = if augmented {
                grad_augmented(&ctx, &a).unwrap()
            } else {
                grad_nominal(&ctx, &a).unwrap()
            };
            let risk = |p: &ParamPoint| {
                if augmented {
                    augmented_risk(&ctx, p).unwrap()
                } else {
                    nominal_risk(&ctx, p).unwrap()
                }
            };
            let mut fd = ParamPoint::zeros(&ctx.arch);
            for li in 0..a.layers.len() {
                for r in 0..a.layers[li].nrows() {
                    for c in 0..a.layers[li].ncols() {
                        let mut plus = a.clone();
                        plus.layers[li][(r, c)] += eps;
                        let mut minus = a.clone();
                        minus.layers[li][(r, c)] -= eps;
                        fd.layers[li][(r, c)] = (risk(&plus) - risk(&minus)) / (2.0 * eps);
                    }
                }
            }
            let rel = grad.sub(&fd).norm() / fd.norm().max(1e-12);
            assert!(rel < 1e-5, "augmented={augmented}: rel err {rel:.3e}");
        }
    }

    #[test]
    fn gradient_vanishes_at_least_squares_minimizer() {
        let ctx = linear_ctx(7);
        // A* = B M⁻¹ with B = E[yxᵀ], M = E[xxᵀ]
        let m = second_moment(&ctx, false);
        let mut b = DMatrix::zeros(2, 3);
        for s in &ctx.dataset.samples {
            b += &s.target * s.input.transpose();
        }
        b /= ctx.dataset.samples.len() as f64;
        let a_star = ParamPoint { layers: vec![&b * m.try_inverse().unwrap()] };
        let g = grad_nominal(&ctx, &a_star).unwrap();
        assert!(g.norm() < 1e-10);
    }

    #[test]
    fn regularized_loss_arithmetic() {
        let ctx = conv_ctx(3, 2, 2.0);
        let a = random_params(&ctx, 8);
        let d = ctx.structure.distance_to_e(&a).unwrap();
        let want = augmented_risk(&ctx, &a).unwrap() + 0.5 * 2.0 * d * d;
        assert!((regularized_loss(&ctx, &a).unwrap() - want).abs() < 1e-12);
        // γ = 0 and A ∈ E both reduce to the augmented risk
        let ctx0 = ctx.with_gamma(0.0);
        assert!(
            (regularized_loss(&ctx0, &a).unwrap() - augmented_risk(&ctx0, &a).unwrap()).abs()
                < 1e-12
        );
        let x = ctx.structure.project_e(&a).unwrap();
        assert!(
            (regularized_loss(&ctx, &x).unwrap() - augmented_risk(&ctx, &x).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn regularized_and_augmented_rhs_agree_on_e() {
        let ctx = conv_ctx(3, 2, 5.0);
        let x = ctx.structure.project_e(&random_params(&ctx, 9)).unwrap();
        let r1 = flow_rhs(&ctx, FlowMode::Augmented, &x).unwrap();
        let r2 = flow_rhs(&ctx, FlowMode::RegularizedAugmented, &x).unwrap();
        assert!(r1.sub(&r2).norm() < 1e-10);
    }

    #[test]
    fn fact_a_on_e_augmented_rhs_equals_equivariant_rhs() {
        let ctx = conv_ctx(3, 2, 0.0);
        let x = ctx.structure.project_e(&random_params(&ctx, 10)).unwrap();
        let aug = flow_rhs(&ctx, FlowMode::Augmented, &x).unwrap();
        let eq = flow_rhs(&ctx, FlowMode::Equivariant, &x).unwrap();
        let rel = aug.sub(&eq).norm() / (1.0 + eq.norm());
        assert!(rel < 1e-8, "rel {rel:.3e}");
    }

    #[test]
    fn stationary_point_gives_constant_trajectory() {
        let ctx = linear_ctx(11);
        let m = second_moment(&ctx, false);
        let mut b = DMatrix::zeros(2, 3);
        for s in &ctx.dataset.samples {
            b += &s.target * s.input.transpose();
        }
        b /= ctx.dataset.samples.len() as f64;
        let a_star = ParamPoint { layers: vec![&b * m.try_inverse().unwrap()] };
        let cfg = DynamicsConfig {
            mode: FlowMode::Nominal,
            integrator: Integrator::Euler,
            step_size: 1e-2,
            num_steps: 20,
            record_every: 5,
            seed: 0,
        };
        let traj = integrate(&ctx, &cfg, &a_star).unwrap();
        let drift = traj.final_point.sub(&a_star).norm();
        assert!(drift < 1e-10, "drift {drift:.3e}");
    }

    /// closed-form solution of Ȧ = −(A−A*)M for symmetric M.
    fn linear_flow_closed_form(
        a0: &DMatrix<f64>,
        a_star: &DMatrix<f64>,
        m: &DMatrix<f64>,
        t: f64,
    ) -> DMatrix<f64> {
        let eig = m.clone().symmetric_eigen();
        let v = &eig.eigenvectors;
        let mut d = DMatrix::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            d[(i, i)] = (-eig.eigenvalues[i] * t).exp();
        }
        a_star + (a0 - a_star) * v * d * v.transpose()
    }

    #[test]
    fn euler_matches_closed_form_to_first_order_and_rk4_is_higher_order() {
        let ctx = linear_ctx(12);
        let m = second_moment(&ctx, false);
        let mut b = DMatrix::zeros(2, 3);
        for s in &ctx.dataset.samples {
            b += &s.target * s.input.transpose();
        }
        b /= ctx.dataset.samples.len() as f64;
        let a_star = &b * m.clone().try_inverse().unwrap();
        let a0 = random_params(&ctx, 12);
        let t_final = 1.0;
        let exact = linear_flow_closed_form(&a0.layers[0], &a_star, &m, t_final);

        let run = |integrator, steps: usize| {
            let cfg = DynamicsConfig {
                mode: FlowMode::Nominal,
                integrator,
                step_size: t_final / steps as f64,
                num_steps: steps,
                record_every: steps,
                seed: 0,
            };
            let traj = integrate(&ctx, &cfg, &a0).unwrap();
            (&traj.final_point.layers[0] - &exact).norm()
        };

        let e1 = run(Integrator::Euler, 50);
        let e2 = run(Integrator::Euler, 100);
        let ratio = e1 / e2;
        assert!((1.5..3.0).contains(&ratio), "Euler order ratio {ratio}");

        let r1 = run(Integrator::Rk4, 25);
        let r2 = run(Integrator::Rk4, 50);
        // halving h cuts the RK4 terminal error by much more than a quarter
        assert!(r1 / r2 > 3.9, "RK4 order ratio {}", r1 / r2);
        assert!(r2 < e2);
    }

    #[test]
    fn flow_confinement_to_l_in_all_modes() {
        let ctx = conv_ctx(3, 2, 1.0);
        let a0 = random_params(&ctx, 13);
        for mode in [
            FlowMode::Nominal,
            FlowMode::Augmented,
            FlowMode::Equivariant,
            FlowMode::RegularizedAugmented,
        ] {
            let cfg = DynamicsConfig {
                mode,
                integrator: Integrator::Euler,
                step_size: 1e-2,
                num_steps: 10,
                record_every: 10,
                seed: 0,
            };
            let traj = integrate(&ctx, &cfg, &a0).unwrap();
            let res = ctx.structure.project_l(&traj.final_point).sub(&traj.final_point).norm();
            assert!(res < 1e-10, "{:?}: residual {res:.3e}", mode.name());
        }
    }

    #[test]
    fn augmented_and_equivariant_trajectories_coincide_on_e() {
        let ctx = conv_ctx(3, 2, 0.0);
        let x0 = ctx.structure.project_e(&random_params(&ctx, 14)).unwrap();
        let cfg = |mode| DynamicsConfig {
            mode,
            integrator: Integrator::Rk4,
            step_size: 1e-2,
            num_steps: 30,
            record_every: 30,
            seed: 0,
        };
        let ta = integrate(&ctx, &cfg(FlowMode::Augmented), &x0).unwrap();
        let te = integrate(&ctx, &cfg(FlowMode::Equivariant), &x0).unwrap();
        let diff = ta.final_point.sub(&te.final_point).norm();
        assert!(diff < 1e-10, "diff {diff:.3e}");
    }

    #[test]
    fn energy_dissipates_for_small_enough_step() {
        let ctx = conv_ctx(3, 2, 0.5);
        let a0 = random_params(&ctx, 15);
        let mut h = 0.5;
        let mut monotone = false;
        for _ in 0..6 {
            let cfg = DynamicsConfig {
                mode: FlowMode::RegularizedAugmented,
                integrator: Integrator::Euler,
                step_size: h,
                num_steps: 15,
                record_every: 1,
                seed: 0,
            };
            let traj = integrate(&ctx, &cfg, &a0).unwrap();
            if traj.status == RunStatus::Completed
                && traj.records.windows(2).all(|w| w[1].reg_loss <= w[0].reg_loss + 1e-12)
            {
                monotone = true;
                break;
            }
            h *= 0.5;
        }
        assert!(monotone, "S_γ failed to decrease even at the smallest step size");
    }

    #[test]
    fn sgd_large_gamma_contracts_perp_component() {
        let mut ctx = conv_ctx(3, 2, 0.0);
        ctx.gamma = 100.0;
        let lr = 1e-3; // lr·γ = 0.1 < 1
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let x = ctx.structure.sample_in_e(&mut rng, |_| 0.3).unwrap();
        let y = ctx.structure.sample_in_e_perp(&mut rng, |_| 1.0).unwrap();
        let a0 = x.add(&y);
        let traj = sgd_train(&ctx, FlowMode::RegularizedAugmented, lr, 8, 3, 1, &a0).unwrap();
        for w in traj.records.windows(2) {
            assert!(
                w[1].dist_e < w[0].dist_e + 1e-6,
                "dist grew: {} -> {}",
                w[0].dist_e,
                w[1].dist_e
            );
        }
        assert!(traj.records.last().unwrap().dist_e < traj.records[0].dist_e);
    }

    #[test]
    fn sgd_trivial_group_gamma_zero_is_plain_sgd() {
        let ctx = linear_ctx(17);
        let a0 = random_params(&ctx, 17);
        let t1 = sgd_train(&ctx, FlowMode::Augmented, 1e-2, 2, 2, 99, &a0).unwrap();
        let t2 = sgd_train(&ctx, FlowMode::Nominal, 1e-2, 2, 2, 99, &a0).unwrap();
        // with |G|=1 the augmentation draw is always the identity, and the RNG
        // consumes no extra draws that would desynchronize the shuffles
        assert_eq!(t1.final_point, t2.final_point);
    }

    #[test]
    fn sgd_is_bit_deterministic() {
        let ctx = conv_ctx(3, 2, 1.0);
        let a0 = random_params(&ctx, 18);
        let t1 = sgd_train(&ctx, FlowMode::RegularizedAugmented, 1e-3, 4, 2, 7, &a0).unwrap();
        let t2 = sgd_train(&ctx, FlowMode::RegularizedAugmented, 1e-3, 4, 2, 7, &a0).unwrap();
        assert_eq!(t1.final_point, t2.final_point);
        for (a, b) in t1.records.iter().zip(&t2.records) {
            assert_eq!(a.dist_e.to_bits(), b.dist_e.to_bits());
        }
    }

    #[test]
    fn hvp_zero_direction_is_zero() {
        let ctx = conv_ctx(3, 1, 0.0);
        let a = random_params(&ctx, 19);
        let z = ParamPoint::zeros(&ctx.arch);
        assert_eq!(hvp_augmented(&ctx, &a, &z).unwrap().norm(), 0.0);
    }

    #[test]
    fn hvp_matches_exact_hessian_on_quadratic_risk() {
        let ctx = linear_ctx(20);
        let a = random_params(&ctx, 20);
        let y = random_params(&ctx, 21);
        let fd = hvp_nominal(&ctx, &a, &y).unwrap();
        let exact = hvp_exact_linear(&ctx, &y, false).unwrap();
        assert!(fd.sub(&exact).norm() < 1e-8, "residual {}", fd.sub(&exact).norm());
    }

    #[test]
    fn hvp_is_symmetric() {
        let ctx = conv_ctx(3, 1, 0.0);
        let a = random_params(&ctx, 22);
        let y = random_params(&ctx, 23);
        let z = random_params(&ctx, 24);
        let hy = hvp_augmented(&ctx, &a, &y).unwrap();
        let hz = hvp_augmented(&ctx, &a, &z).unwrap();
        let lhs = hy.dot(&z);
        let rhs = hz.dot(&y);
        assert!((lhs - rhs).abs() < 1e-6 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn lemma_averaging_identity_for_hvp_quadratic_form() {
        let ctx = conv_ctx(3, 2, 0.0);
        let x = ctx.structure.project_e(&random_params(&ctx, 25)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let y = ctx.structure.sample_in_e_perp(&mut rng, |_| 1.0).unwrap();
        let lhs = hvp_augmented(&ctx, &x, &y).unwrap().dot(&y);
        let mut rhs = 0.0;
        for g in 0..4 {
            let gy = ctx.structure.conjugate(g, &y);
            rhs += hvp_nominal(&ctx, &x, &gy).unwrap().dot(&gy);
        }
        rhs /= 4.0;
        let rel = (lhs - rhs).abs() / (1.0 + lhs.abs());
        assert!(rel < 1e-5, "lhs {lhs}, rhs {rhs}");
    }

    #[test]
    fn theorem1_augmented_flow_keeps_e_invariant() {
        let ctx = conv_ctx(3, 2, 0.0);
        let x0 = ctx.structure.project_e(&random_params(&ctx, 27)).unwrap();
        let h = 1e-2;
        let cfg = DynamicsConfig {
            mode: FlowMode::Augmented,
            integrator: Integrator::Euler,
            step_size: h,
            num_steps: 100,
            record_every: 1,
            seed: 0,
        };
        let traj = integrate(&ctx, &cfg, &x0).unwrap();
        let max_dist = traj.records.iter().map(|r| r.dist_e).fold(0.0, f64::max);
        assert!(max_dist < 10.0 * h, "max dist {max_dist:.3e}");
    }
}
