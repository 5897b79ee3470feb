//! Progressive vectors orthogonalization and subspace decomposition.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::latent::LatentVector;

/// Ordered, pairwise-orthogonal (not normalized) spanning set.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    vectors: Vec<LatentVector>,
    norms_sq: Vec<f64>,
    dropped: Vec<usize>,
    eps: f64,
}

/// Compact description of a basis for traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BasisSummary {
    pub size: usize,
    pub dropped: usize,
}

impl Basis {
    pub fn empty(eps: f64) -> Self {
        Self {
            vectors: Vec::new(),
            norms_sq: Vec::new(),
            dropped: Vec::new(),
            eps,
        }
    }

    pub fn vectors(&self) -> &[LatentVector] {
        &self.vectors
    }

    /// Input indices eliminated as degenerate residuals.
    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn summary(&self) -> BasisSummary {
        BasisSummary {
            size: self.vectors.len(),
            dropped: self.dropped.len(),
        }
    }
}

/// Gram–Schmidt sweep over `inputs` in order.
///
/// Each residual starts as its input and has its projection onto every
/// previously retained vector removed, one at a time against the running
/// residual. Residuals with norm below `eps * ‖input‖` (or exactly zero)
/// are dropped and recorded by input index.
pub fn pvo(inputs: &[LatentVector], eps: f64) -> Result<Basis> {
    let first = inputs.first().ok_or(Error::Empty("pvo needs at least one vector"))?;
    if !(eps > 0.0) {
        return Err(Error::Config(format!("pvo eps must be positive, got {eps}")));
    }
    let mut basis = Basis::empty(eps);
    for (i, input) in inputs.iter().enumerate() {
        first.check_shape(input)?;
        let mut u = input.data().to_vec();
        // A second sweep restores orthogonality lost to cancellation when
        // the input is nearly in the span already.
        for _ in 0..2 {
            for (prev, &nsq) in basis.vectors.iter().zip(&basis.norms_sq) {
                let coef = crate::latent::dot(&u, prev.data()) / nsq;
                for (x, p) in u.iter_mut().zip(prev.data()) {
                    *x -= coef * p;
                }
            }
        }
        let residual = input.with_data(u);
        let nsq = residual.norm_sq();
        let norm = nsq.sqrt();
        if norm == 0.0 || norm < eps * input.norm() {
            basis.dropped.push(i);
            continue;
        }
        basis.vectors.push(residual);
        basis.norms_sq.push(nsq);
    }
    Ok(basis)
}

/// Orthogonal projection of `v` onto the span of `basis`.
///
/// An empty basis spans `{0}`, so the projection is the zero vector.
pub fn project(v: &LatentVector, basis: &Basis) -> Result<LatentVector> {
    let mut out = vec![0.0; v.len()];
    for (u, &nsq) in basis.vectors.iter().zip(&basis.norms_sq) {
        let coef = v.dot(u)? / nsq;
        for (o, x) in out.iter_mut().zip(u.data()) {
            *o += coef * x;
        }
    }
    Ok(v.with_data(out))
}

/// In-subspace and orthogonal parts of a velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityDecomposition {
    pub v_sub: LatentVector,
    pub v_orth: LatentVector,
    original: LatentVector,
}

impl VelocityDecomposition {
    /// The decomposed velocity.
    pub fn original(&self) -> &LatentVector {
        &self.original
    }
}

pub fn decompose(v: &LatentVector, basis: &Basis) -> Result<VelocityDecomposition> {
    let v_sub = project(v, basis)?;
    let v_orth = v.sub(&v_sub)?;
    Ok(VelocityDecomposition {
        v_sub,
        v_orth,
        original: v.clone(),
    })
}
