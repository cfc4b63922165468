//! The architecture subspace L, the equivariant-map space H_G via the
//! Reynolds projection, their intersection E = H_G ∩ L, and the orthogonal
//! projections Π_L, Π_G, Π_E, Π_{E⊥}. Projections act on parameter tuples
//! directly; explicit bases are materialized only at desk-scale dimensions.

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{EqError, Result};
use crate::group::{conjugate_layer, grid_index, haar_average, Representation};
use crate::net::{Architecture, ParamPoint};

/// Tolerance below which the Π_LΠ_G commutator is accepted as zero.
pub const COMPAT_TOL: f64 = 1e-10;

/// Gram–Schmidt drop tolerance for rank detection of basis intersections.
pub const GS_DROP_TOL: f64 = 1e-10;

/// Tangent space of one layer's admissible matrices.
#[derive(Debug, Clone)]
pub enum LayerSubspace {
    /// The whole space Hom(X_i, X_{i+1}); Π is the identity.
    Full { rows: usize, cols: usize },
    /// Circular (wrap-around) convolution operators on an `h×w` grid with the
    /// given tap support, mapping `in_ch` to `out_ch` channels.
    Conv {
        h: usize,
        w: usize,
        in_ch: usize,
        out_ch: usize,
        support: Vec<(i64, i64)>,
    },
    /// Explicit orthonormal basis.
    Span { rows: usize, cols: usize, basis: Vec<DMatrix<f64>> },
}

/// The 3×3 neighborhood stencil, row-major.
pub fn full_3x3_support() -> Vec<(i64, i64)> {
    let mut taps = Vec::with_capacity(9);
    for dr in -1..=1 {
        for dc in -1..=1 {
            taps.push((dr, dc));
        }
    }
    taps
}

/// The 5-point cross stencil (center plus axis neighbors).
pub fn cross_support() -> Vec<(i64, i64)> {
    vec![(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)]
}

/// Circular convolution subspace for one layer (offset zero, linear).
/// One tangent direction per (out channel, in channel, tap).
pub fn conv_subspace(
    h: usize,
    w: usize,
    in_ch: usize,
    out_ch: usize,
    support: &[(i64, i64)],
) -> Result<LayerSubspace> {
    let mut seen = HashSet::new();
    for &(dr, dc) in support {
        if dr.unsigned_abs() as usize >= h || dc.unsigned_abs() as usize >= w {
            return Err(EqError::InvalidArgument(format!(
                "tap ({dr},{dc}) out of range for {h}×{w} grid"
            )));
        }
        let canon = (dr.rem_euclid(h as i64), dc.rem_euclid(w as i64));
        if !seen.insert(canon) {
            return Err(EqError::InvalidArgument(format!("duplicate tap ({dr},{dc})")));
        }
    }
    Ok(LayerSubspace::Conv { h, w, in_ch, out_ch, support: support.to_vec() })
}

impl LayerSubspace {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            LayerSubspace::Full { rows, cols } => (*rows, *cols),
            LayerSubspace::Conv { h, w, in_ch, out_ch, .. } => (h * w * out_ch, h * w * in_ch),
            LayerSubspace::Span { rows, cols, .. } => (*rows, *cols),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LayerSubspace::Full { rows, cols } => rows * cols,
            LayerSubspace::Conv { in_ch, out_ch, support, .. } => in_ch * out_ch * support.len(),
            LayerSubspace::Span { basis, .. } => basis.len(),
        }
    }

    /// Orthogonal projection of a matrix onto this layer subspace.
    pub fn project(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            LayerSubspace::Full { .. } => m.clone(),
            LayerSubspace::Conv { h, w, in_ch, out_ch, support } => {
                let (hh, ww) = (*h, *w);
                let mut out = DMatrix::zeros(m.nrows(), m.ncols());
                let npix = (hh * ww) as f64;
                for oc in 0..*out_ch {
                    for ic in 0..*in_ch {
                        for &(dr, dc) in support {
                            // ⟨M, K⟩ / ‖K‖² with K the unnormalized tap kernel
                            let mut coeff = 0.0;
                            for r in 0..hh {
                                for c in 0..ww {
                                    let ri = grid_index(hh, ww, oc, r, c);
                                    let ci = grid_index(
                                        hh,
                                        ww,
                                        ic,
                                        (r as i64 + dr).rem_euclid(hh as i64) as usize,
                                        (c as i64 + dc).rem_euclid(ww as i64) as usize,
                                    );
                                    coeff += m[(ri, ci)];
                                }
                            }
                            coeff /= npix;
                            for r in 0..hh {
                                for c in 0..ww {
                                    let ri = grid_index(hh, ww, oc, r, c);
                                    let ci = grid_index(
                                        hh,
                                        ww,
                                        ic,
                                        (r as i64 + dr).rem_euclid(hh as i64) as usize,
                                        (c as i64 + dc).rem_euclid(ww as i64) as usize,
                                    );
                                    out[(ri, ci)] += coeff;
                                }
                            }
                        }
                    }
                }
                out
            }
            LayerSubspace::Span { basis, .. } => {
                let mut out = DMatrix::zeros(m.nrows(), m.ncols());
                for b in basis {
                    out += b * m.dot(b);
                }
                out
            }
        }
    }

    /// Materialize an orthonormal tangent basis as explicit matrices.
    /// Intended for desk-scale dimensions (tests, oracles, dim reporting).
    pub fn materialize_basis(&self) -> Vec<DMatrix<f64>> {
        match self {
            LayerSubspace::Full { rows, cols } => {
                let mut out = Vec::with_capacity(rows * cols);
                for c in 0..*cols {
                    for r in 0..*rows {
                        let mut m = DMatrix::zeros(*rows, *cols);
                        m[(r, c)] = 1.0;
                        out.push(m);
                    }
                }
                out
            }
            LayerSubspace::Conv { h, w, in_ch, out_ch, support } => {
                let (rows, cols) = self.shape();
                let norm = 1.0 / ((h * w) as f64).sqrt();
                let mut out = Vec::new();
                for oc in 0..*out_ch {
                    for ic in 0..*in_ch {
                        for &(dr, dc) in support {
                            let mut m = DMatrix::zeros(rows, cols);
                            for r in 0..*h {
                                for c in 0..*w {
                                    let ri = grid_index(*h, *w, oc, r, c);
                                    let ci = grid_index(
                                        *h,
                                        *w,
                                        ic,
                                        (r as i64 + dr).rem_euclid(*h as i64) as usize,
                                        (c as i64 + dc).rem_euclid(*w as i64) as usize,
                                    );
                                    m[(ri, ci)] = norm;
                                }
                            }
                            out.push(m);
                        }
                    }
                }
                out
            }
            LayerSubspace::Span { basis, .. } => basis.clone(),
        }
    }
}

/// An affine subspace of parameter tuples: offset plus a per-layer tangent
/// space. The dynamics in this crate use linear subspaces (offset 0) only.
#[derive(Debug, Clone)]
pub struct AffineSubspace {
    pub offset: ParamPoint,
    pub layers: Vec<LayerSubspace>,
}

impl AffineSubspace {
    pub fn linear(layers: Vec<LayerSubspace>) -> Self {
        let offset = ParamPoint {
            layers: layers
                .iter()
                .map(|l| {
                    let (r, c) = l.shape();
                    DMatrix::zeros(r, c)
                })
                .collect(),
        };
        AffineSubspace { offset, layers }
    }

    /// Full ambient space for an architecture (Π_L = id).
    pub fn full(arch: &Architecture) -> Self {
        let layers = (0..arch.num_layers())
            .map(|i| {
                let (r, c) = arch.layer_shape(i);
                LayerSubspace::Full { rows: r, cols: c }
            })
            .collect();
        Self::linear(layers)
    }

    pub fn is_linear(&self) -> bool {
        self.offset.layers.iter().all(|m| m.iter().all(|&v| v == 0.0))
    }

    pub fn tangent_dim(&self) -> usize {
        self.layers.iter().map(|l| l.dim()).sum()
    }

    /// Π_L: offset + orthogonal projection of (A − offset) onto the tangent.
    pub fn project(&self, a: &ParamPoint) -> ParamPoint {
        let layers = a
            .layers
            .iter()
            .zip(&self.layers)
            .zip(&self.offset.layers)
            .map(|((m, sub), off)| off + sub.project(&(m - off)))
            .collect();
        ParamPoint { layers }
    }
}

/// Modified Gram–Schmidt on parameter tuples with rank-drop tolerance.
pub fn orthonormalize(vectors: Vec<ParamPoint>, drop_tol: f64) -> Vec<ParamPoint> {
    let mut kept: Vec<ParamPoint> = Vec::new();
    for mut v in vectors {
        for b in &kept {
            let c = v.dot(b);
            v.axpy(-c, b);
        }
        // second pass for numerical safety
        for b in &kept {
            let c = v.dot(b);
            v.axpy(-c, b);
        }
        let n = v.norm();
        if n > drop_tol {
            kept.push(v.scale(1.0 / n));
        }
    }
    kept
}

/// The equivariant structure of a constrained architecture: one orthogonal
/// representation per network space, the subspace L, and the projections
/// derived from them. Compatibility of Π_L and Π_G is measured at
/// construction; the E projections refuse to run when it fails.
#[derive(Debug, Clone)]
pub struct EquivariantStructure {
    pub reps: Vec<Arc<Representation>>,
    pub subspace: AffineSubspace,
    pub compat_ok: bool,
    pub commutator_norm: f64,
}

impl EquivariantStructure {
    pub fn new(reps: Vec<Arc<Representation>>, subspace: AffineSubspace) -> Result<Self> {
        if reps.len() != subspace.layers.len() + 1 {
            return Err(EqError::InvalidArgument(format!(
                "need {} representations for {} layers, got {}",
                subspace.layers.len() + 1,
                subspace.layers.len(),
                reps.len()
            )));
        }
        for (i, l) in subspace.layers.iter().enumerate() {
            let (r, c) = l.shape();
            if reps[i].dim != c || reps[i + 1].dim != r {
                return Err(EqError::InvalidArgument(format!(
                    "layer {i} shape {r}×{c} does not match reps ({}, {})",
                    reps[i + 1].dim,
                    reps[i].dim
                )));
            }
        }
        if !subspace.is_linear() {
            return Err(EqError::InvalidArgument(
                "only linear subspaces (offset 0) are supported".into(),
            ));
        }
        let mut s = EquivariantStructure { reps, subspace, compat_ok: false, commutator_norm: 0.0 };
        let (ok, norm) = s.check_compatibility();
        s.compat_ok = ok;
        s.commutator_norm = norm;
        Ok(s)
    }

    pub fn num_layers(&self) -> usize {
        self.subspace.layers.len()
    }

    fn zero_like(&self) -> ParamPoint {
        ParamPoint {
            layers: self
                .subspace
                .layers
                .iter()
                .map(|l| {
                    let (r, c) = l.shape();
                    DMatrix::zeros(r, c)
                })
                .collect(),
        }
    }

    /// The Reynolds projection Π_G: layer-wise uniform average of the
    /// conjugation action, (1/|G|) Σ_g ρ_{i+1}(g)⁻¹ A_i ρ_i(g).
    pub fn reynolds(&self, a: &ParamPoint) -> ParamPoint {
        let layers = a
            .layers
            .iter()
            .enumerate()
            .map(|(i, m)| {
                haar_average(&self.reps[i].group, |g| {
                    conjugate_layer(&self.reps[i + 1], &self.reps[i], g, m)
                })
                .expect("conjugation preserves shape")
            })
            .collect();
        ParamPoint { layers }
    }

    /// ρ̄(g) applied to a whole tuple.
    pub fn conjugate(&self, g: usize, a: &ParamPoint) -> ParamPoint {
        let layers = a
            .layers
            .iter()
            .enumerate()
            .map(|(i, m)| conjugate_layer(&self.reps[i + 1], &self.reps[i], g, m))
            .collect();
        ParamPoint { layers }
    }

    pub fn project_l(&self, a: &ParamPoint) -> ParamPoint {
        self.subspace.project(a)
    }

    /// Π_E = Π_G ∘ Π_L (valid under the compatibility condition).
    pub fn project_e(&self, a: &ParamPoint) -> Result<ParamPoint> {
        if !self.compat_ok {
            return Err(EqError::Incompatible(self.commutator_norm));
        }
        Ok(self.reynolds(&self.project_l(a)))
    }

    /// Component in T E⊥ := T L ∩ (T E)⊥, i.e. Π_L(A) − Π_E(A).
    pub fn project_e_perp(&self, a: &ParamPoint) -> Result<ParamPoint> {
        let pl = self.project_l(a);
        if !self.compat_ok {
            return Err(EqError::Incompatible(self.commutator_norm));
        }
        let pe = self.reynolds(&pl);
        Ok(pl.sub(&pe))
    }

    /// ‖Π_{E⊥} A‖ (A is projected to L first).
    pub fn distance_to_e(&self, a: &ParamPoint) -> Result<f64> {
        Ok(self.project_e_perp(a)?.norm())
    }

    /// Estimates ‖Π_L Π_G − Π_G Π_L‖ as the max residual over unit probe
    /// directions: every canonical direction when the layer is small enough,
    /// seeded random probes otherwise.
    pub fn check_compatibility(&self) -> (bool, f64) {
        const EXHAUSTIVE_LIMIT: usize = 4096;
        const RANDOM_PROBES: usize = 64;
        let mut worst = 0.0f64;
        for (li, layer) in self.subspace.layers.iter().enumerate() {
            let (rows, cols) = layer.shape();
            let mut probe = |m: DMatrix<f64>| {
                let mut d = self.zero_like();
                d.layers[li] = m;
                let a = self.project_l(&self.reynolds(&d));
                let b = self.reynolds(&self.project_l(&d));
                let res = a.sub(&b).norm();
                if res > worst {
                    worst = res;
                }
            };
            if rows * cols <= EXHAUSTIVE_LIMIT {
                for c in 0..cols {
                    for r in 0..rows {
                        let mut m = DMatrix::zeros(rows, cols);
                        m[(r, c)] = 1.0;
                        probe(m);
                    }
                }
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ li as u64);
                for _ in 0..RANDOM_PROBES {
                    let mut m =
                        DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                    let n = m.norm();
                    m /= n;
                    probe(m);
                }
            }
        }
        (worst < COMPAT_TOL, worst)
    }

    /// dim T L per layer.
    pub fn dims_l(&self) -> Vec<usize> {
        self.subspace.layers.iter().map(|l| l.dim()).collect()
    }

    /// dim T E per layer, as trace of Π_E restricted to T L. Full layers use
    /// the character formula (1/|G|) Σ_g tr ρ_out(g) · tr ρ_in(g); the others
    /// sum ⟨b_j, Π_E b_j⟩ over the materialized tangent basis.
    pub fn dims_e(&self) -> Result<Vec<usize>> {
        if !self.compat_ok {
            return Err(EqError::Incompatible(self.commutator_norm));
        }
        let mut out = Vec::new();
        for (li, layer) in self.subspace.layers.iter().enumerate() {
            let group = &self.reps[li].group;
            let d = match layer {
                LayerSubspace::Full { .. } => {
                    let mut acc = 0.0;
                    for g in group.elements() {
                        acc += self.reps[li + 1].matrix(g).trace() * self.reps[li].matrix(g).trace();
                    }
                    acc / group.order as f64
                }
                _ => {
                    let mut acc = 0.0;
                    for b in layer.materialize_basis() {
                        let proj = haar_average(group, |g| {
                            conjugate_layer(&self.reps[li + 1], &self.reps[li], g, &b)
                        })
                        .expect("conjugation preserves shape");
                        acc += layer.project(&proj).dot(&b);
                    }
                    acc
                }
            };
            let rounded = d.round();
            if (d - rounded).abs() > 1e-6 {
                return Err(EqError::InvalidArgument(format!(
                    "dim T E of layer {li} is not an integer ({d})"
                )));
            }
            out.push(rounded as usize);
        }
        Ok(out)
    }

    /// Orthonormal basis of T E, one tuple per direction (desk scale only:
    /// materializes every layer's tangent basis).
    pub fn e_basis(&self) -> Result<Vec<ParamPoint>> {
        if !self.compat_ok {
            return Err(EqError::Incompatible(self.commutator_norm));
        }
        let mut raw = Vec::new();
        for (li, layer) in self.subspace.layers.iter().enumerate() {
            for b in layer.materialize_basis() {
                let mut v = self.zero_like();
                v.layers[li] = b;
                raw.push(self.project_e(&v)?);
            }
        }
        Ok(orthonormalize(raw, GS_DROP_TOL))
    }

    /// Orthonormal basis of T E⊥ (inside T L); desk scale only.
    pub fn e_perp_basis(&self) -> Result<Vec<ParamPoint>> {
        if !self.compat_ok {
            return Err(EqError::Incompatible(self.commutator_norm));
        }
        let mut raw = Vec::new();
        for (li, layer) in self.subspace.layers.iter().enumerate() {
            for b in layer.materialize_basis() {
                let mut v = self.zero_like();
                v.layers[li] = b;
                raw.push(self.project_e_perp(&v)?);
            }
        }
        Ok(orthonormalize(raw, GS_DROP_TOL))
    }

    /// Gaussian sample projected onto T E; per-layer entries scaled by `scale(i)`.
    pub fn sample_in_e<R: Rng>(&self, rng: &mut R, scale: impl Fn(usize) -> f64) -> Result<ParamPoint> {
        let g = self.sample_gaussian(rng, scale);
        self.project_e(&g)
    }

    /// Gaussian sample projected onto T E⊥.
    pub fn sample_in_e_perp<R: Rng>(
        &self,
        rng: &mut R,
        scale: impl Fn(usize) -> f64,
    ) -> Result<ParamPoint> {
        let g = self.sample_gaussian(rng, scale);
        self.project_e_perp(&g)
    }

    pub fn sample_gaussian<R: Rng>(&self, rng: &mut R, scale: impl Fn(usize) -> f64) -> ParamPoint {
        use rand_distr::{Distribution, StandardNormal};
        let layers = self
            .subspace
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let (r, c) = l.shape();
                let s = scale(i);
                DMatrix::from_fn(r, c, |_, _| {
                    let v: f64 = StandardNormal.sample(rng);
                    v * s
                })
            })
            .collect();
        ParamPoint { layers }
    }
}
