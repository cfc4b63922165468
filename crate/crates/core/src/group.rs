//! Finite groups, orthogonal representations on network spaces, and exact
//! uniform (Haar) averaging. Element indices are dense integers `0..order`
//! with index 0 the identity; everything is table driven.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{EqError, Result};

/// A finite group given by its Cayley table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteGroup {
    pub order: usize,
    /// `cayley[a][b]` is the index of the product `a·b`.
    pub cayley: Vec<Vec<usize>>,
    pub identity: usize,
    pub inverses: Vec<usize>,
}

impl FiniteGroup {
    /// The cyclic group Z/nZ with `cayley[a][b] = (a+b) mod n`.
    pub fn cyclic(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(EqError::InvalidArgument("group order must be positive".into()));
        }
        let cayley = (0..n)
            .map(|a| (0..n).map(|b| (a + b) % n).collect())
            .collect();
        let inverses = (0..n).map(|a| (n - a) % n).collect();
        Ok(FiniteGroup { order: n, cayley, identity: 0, inverses })
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.cayley[a][b]
    }

    pub fn inv(&self, a: usize) -> usize {
        self.inverses[a]
    }

    pub fn elements(&self) -> impl Iterator<Item = usize> {
        0..self.order
    }

    /// Exhaustive check of the group axioms. O(order³); desk scale only.
    pub fn validate(&self) -> Result<()> {
        let n = self.order;
        if self.cayley.len() != n || self.cayley.iter().any(|row| row.len() != n) {
            return Err(EqError::InvalidArgument("cayley table shape mismatch".into()));
        }
        for g in 0..n {
            if self.mul(self.identity, g) != g || self.mul(g, self.identity) != g {
                return Err(EqError::InvalidArgument(format!("identity axiom fails at {g}")));
            }
            if self.mul(g, self.inverses[g]) != self.identity {
                return Err(EqError::InvalidArgument(format!("inverse axiom fails at {g}")));
            }
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if self.mul(self.mul(a, b), c) != self.mul(a, self.mul(b, c)) {
                        return Err(EqError::InvalidArgument(format!(
                            "associativity fails at ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Flat index of pixel `(r, c)` in channel `ch` of an `h×w×channels` grid.
/// Layout is channel-major: each channel occupies a contiguous `h·w` block.
pub fn grid_index(h: usize, w: usize, ch: usize, r: usize, c: usize) -> usize {
    ch * h * w + r * w + c
}

/// An orthogonal representation of a finite group on ℝ^dim, stored as one
/// dense matrix per group element. Permutation representations additionally
/// carry their index maps, which the projection code uses as a fast path.
#[derive(Debug, Clone)]
pub struct Representation {
    pub group: Arc<FiniteGroup>,
    pub dim: usize,
    pub matrices: Vec<DMatrix<f64>>,
    /// `perms[g][src] = dst` when element `g` acts by a coordinate permutation.
    pub perms: Option<Vec<Vec<usize>>>,
}

impl Representation {
    /// The trivial representation: every element acts as the identity.
    pub fn trivial(group: Arc<FiniteGroup>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(EqError::InvalidArgument("representation dim must be positive".into()));
        }
        let perms: Vec<Vec<usize>> = vec![(0..dim).collect(); group.order];
        Ok(Self::from_perms(group, dim, perms))
    }

    /// Build a representation from per-element permutations `perm[src] = dst`.
    pub fn from_perms(group: Arc<FiniteGroup>, dim: usize, perms: Vec<Vec<usize>>) -> Self {
        let matrices = perms
            .iter()
            .map(|p| {
                let mut m = DMatrix::zeros(dim, dim);
                for (src, &dst) in p.iter().enumerate() {
                    m[(dst, src)] = 1.0;
                }
                m
            })
            .collect();
        Representation { group, dim, matrices, perms: Some(perms) }
    }

    /// C4 acting on a flattened `h×w×channels` grid by 90° rotations.
    /// The generator maps pixel `(r, c)` to `(c, h−1−r)` in every channel.
    pub fn rotation_on_grid(
        group: Arc<FiniteGroup>,
        h: usize,
        w: usize,
        channels: usize,
    ) -> Result<Self> {
        if h != w {
            return Err(EqError::InvalidArgument(format!(
                "rotation rep needs a square grid, got {h}×{w}"
            )));
        }
        if group.order != 4 {
            return Err(EqError::InvalidArgument("rotation rep is defined for C4".into()));
        }
        let dim = h * w * channels;
        // generator permutation, then powers of it
        let mut gen = vec![0usize; dim];
        for ch in 0..channels {
            for r in 0..h {
                for c in 0..w {
                    gen[grid_index(h, w, ch, r, c)] = grid_index(h, w, ch, c, h - 1 - r);
                }
            }
        }
        let mut perms = Vec::with_capacity(4);
        let mut cur: Vec<usize> = (0..dim).collect();
        for _ in 0..4 {
            perms.push(cur.clone());
            cur = cur.iter().map(|&dst| gen[dst]).collect();
        }
        Ok(Self::from_perms(group, dim, perms))
    }

    pub fn matrix(&self, g: usize) -> &DMatrix<f64> {
        &self.matrices[g]
    }

    /// Apply ρ(g) to a vector.
    pub fn apply(&self, g: usize, x: &DVector<f64>) -> DVector<f64> {
        if let Some(perms) = &self.perms {
            let p = &perms[g];
            let mut y = DVector::zeros(self.dim);
            for (src, &dst) in p.iter().enumerate() {
                y[dst] = x[src];
            }
            y
        } else {
            &self.matrices[g] * x
        }
    }

    /// Apply ρ(g⁻¹) = ρ(g)ᵀ to a vector.
    pub fn apply_inv(&self, g: usize, x: &DVector<f64>) -> DVector<f64> {
        self.apply(self.group.inv(g), x)
    }

    /// Homomorphism, identity and orthogonality residuals; Ok when all < tol.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let id = DMatrix::identity(self.dim, self.dim);
        let e = self.group.identity;
        if (&self.matrices[e] - &id).norm() > tol {
            return Err(EqError::InvalidArgument("identity element is not mapped to I".into()));
        }
        for g in self.group.elements() {
            let orth = (self.matrices[g].transpose() * &self.matrices[g] - &id).norm();
            if orth > tol {
                return Err(EqError::InvalidArgument(format!(
                    "element {g} is not orthogonal (residual {orth:.3e})"
                )));
            }
            for h in self.group.elements() {
                let prod = &self.matrices[g] * &self.matrices[h];
                let res = (&prod - &self.matrices[self.group.mul(g, h)]).norm();
                if res > tol {
                    return Err(EqError::InvalidArgument(format!(
                        "homomorphism fails at ({g},{h}) with residual {res:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Exact Haar average over a finite group: (1/|G|) Σ_g f(g).
pub fn haar_average<F>(group: &FiniteGroup, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(usize) -> DMatrix<f64>,
{
    let first = f(group.identity);
    let (rows, cols) = first.shape();
    let mut acc = first;
    for g in group.elements() {
        if g == group.identity {
            continue;
        }
        let m = f(g);
        if m.shape() != (rows, cols) {
            return Err(EqError::InvalidArgument(format!(
                "haar_average: shape mismatch at element {g}: {:?} vs {:?}",
                m.shape(),
                (rows, cols)
            )));
        }
        acc += m;
    }
    Ok(acc / group.order as f64)
}

/// Conjugation action ρ̄(g)A = ρ_out(g)⁻¹ A ρ_in(g) on a single layer.
pub fn conjugate_layer(
    rep_out: &Representation,
    rep_in: &Representation,
    g: usize,
    a: &DMatrix<f64>,
) -> DMatrix<f64> {
    if let (Some(po), Some(pi)) = (&rep_out.perms, &rep_in.perms) {
        // (ρ_outᵀ A ρ_in)[i,j] = A[perm_out[i], perm_in[j]]
        let po = &po[g];
        let pi = &pi[g];
        DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(po[i], pi[j])])
    } else {
        rep_out.matrices[g].transpose() * a * &rep_in.matrices[g]
    }
}
