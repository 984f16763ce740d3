//! Complex vectors and complex reflections.
//!
//! A complex reflection is a unitary map differing from the identity by a
//! rank-one operator. For a nonzero anchor `a` and a unit phase `alpha` it acts as
//!
//! ```text
//!   r_{a,alpha}(x) = x - (1 - alpha) <x,a>/<a,a> a
//! ```
//!
//! with the inner product linear in the first slot and conjugate-linear in the
//! second. Every unitary in the tower is a product of such reflections, one per
//! dimension, each acting on C^j extended by the identity.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

const PHASE_TOL: f64 = 1e-12;
const UNIT_TOL: f64 = 1e-12;
const IDENTITY_TOL: f64 = 1e-14;

/// Dense complex vector with the first-slot-linear inner product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexVec {
    entries: Vec<C64>,
}

impl ComplexVec {
    pub fn new(entries: Vec<C64>) -> Self {
        Self { entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: vec![C64::new(0.0, 0.0); dim],
        }
    }

    /// Standard basis vector `e_{index}` (0-based) in dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.entries[index] = C64::new(1.0, 0.0);
        v
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [C64] {
        &mut self.entries
    }

    pub fn into_entries(self) -> Vec<C64> {
        self.entries
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self, other>`, linear in `self`, conjugate-linear in `other`.
    pub fn inner(&self, other: &Self) -> C64 {
        inner(&self.entries, &other.entries)
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            entries: self.entries.iter().map(|z| z * c).collect(),
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroAnchor);
        }
        Ok(self.scale(C64::new(1.0 / n, 0.0)))
    }
}

/// `<u, v>` on raw slices, linear in the first argument.
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a * b.conj()).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Kind {
    Identity,
    General {
        anchor: ComplexVec,
        anchor_norm_sqr: f64,
        phase: C64,
    },
}

/// A complex reflection on `C^dim`, extended by the identity on larger spaces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reflection {
    kind: Kind,
    dim: usize,
}

impl Reflection {
    /// The identity map, flagged explicitly rather than via a degenerate anchor.
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: Kind::Identity,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, Kind::Identity)
    }

    /// Anchor and phase, or `None` for the identity.
    pub fn parts(&self) -> Option<(&ComplexVec, C64)> {
        match &self.kind {
            Kind::Identity => None,
            Kind::General { anchor, phase, .. } => Some((anchor, *phase)),
        }
    }

    /// Inverse reflection: `r_{a,alpha}^{-1} = r_{a, conj(alpha)}`.
    pub fn inverse(&self) -> Self {
        match &self.kind {
            Kind::Identity => self.clone(),
            Kind::General {
                anchor,
                anchor_norm_sqr,
                phase,
            } => Self {
                kind: Kind::General {
                    anchor: anchor.clone(),
                    anchor_norm_sqr: *anchor_norm_sqr,
                    phase: phase.conj(),
                },
                dim: self.dim,
            },
        }
    }

    /// Applies the reflection to the first `self.dim()` entries of `xs` in place;
    /// entries beyond the reflection's dimension are untouched (identity extension).
    pub fn apply_in_place(&self, xs: &mut [C64]) -> Result<()> {
        if xs.len() < self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: xs.len(),
            });
        }
        let Kind::General {
            anchor,
            anchor_norm_sqr,
            phase,
        } = &self.kind
        else {
            return Ok(());
        };
        let a = anchor.entries();
        let coef = (C64::new(1.0, 0.0) - phase) * inner(&xs[..self.dim], a) / anchor_norm_sqr;
        for (x, ai) in xs[..self.dim].iter_mut().zip(a) {
            *x -= coef * ai;
        }
        Ok(())
    }
}

/// Builds `r_{a, alpha}` from a nonzero anchor and a unit phase.
///
/// The phase is renormalized to exact modulus 1; deviations beyond 1e-12 are
/// rejected. `alpha = 1` yields the identity.
pub fn make_reflection(a: &ComplexVec, alpha: C64) -> Result<Reflection> {
    let norm_sqr = a.norm_sqr();
    if norm_sqr == 0.0 {
        return Err(Error::ZeroAnchor);
    }
    let modulus = alpha.norm();
    if (modulus - 1.0).abs() > PHASE_TOL {
        return Err(Error::NonUnitPhase { modulus });
    }
    let phase = alpha / modulus;
    if (phase - C64::new(1.0, 0.0)).norm() < IDENTITY_TOL {
        return Ok(Reflection::identity(a.dim()));
    }
    Ok(Reflection {
        kind: Kind::General {
            anchor: a.clone(),
            anchor_norm_sqr: norm_sqr,
            phase,
        },
        dim: a.dim(),
    })
}

/// The unique complex reflection with `r(e) = m`, for unit vectors `e`, `m`.
///
/// Anchor `m - e`, phase `-(1 - <m,e>)/(1 - conj <m,e>)`. Near-coincident inputs
/// (`|m - e| < 1e-14`) return the exact identity to avoid cancellation in the phase.
pub fn reflection_sending(e: &ComplexVec, m: &ComplexVec) -> Result<Reflection> {
    if e.dim() != m.dim() {
        return Err(Error::DimMismatch {
            expected: e.dim(),
            got: m.dim(),
        });
    }
    for v in [e, m] {
        let norm = v.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NonUnitInput { norm });
        }
    }
    let anchor = ComplexVec::new(
        m.entries()
            .iter()
            .zip(e.entries())
            .map(|(mi, ei)| mi - ei)
            .collect(),
    );
    let norm_sqr = anchor.norm_sqr();
    if norm_sqr.sqrt() < IDENTITY_TOL {
        return Ok(Reflection::identity(e.dim()));
    }
    let c = m.inner(e);
    let one = C64::new(1.0, 0.0);
    let phase = -(one - c) / (one - c.conj());
    Ok(Reflection {
        kind: Kind::General {
            anchor,
            anchor_norm_sqr: norm_sqr,
            phase,
        },
        dim: e.dim(),
    })
}

/// Applies `r` to `x` (dimensions must match exactly).
pub fn apply(r: &Reflection, x: &ComplexVec) -> Result<ComplexVec> {
    if x.dim() != r.dim() {
        return Err(Error::DimMismatch {
            expected: r.dim(),
            got: x.dim(),
        });
    }
    let mut out = x.clone();
    r.apply_in_place(out.entries_mut())?;
    Ok(out)
}

/// Applies the product `r_m ∘ ... ∘ r_1` to `x`, each `r_j` acting on its own
/// `C^j` extended by the identity to the ambient dimension of `x`.
pub fn compose_apply(rs: &[Reflection], x: &ComplexVec) -> Result<ComplexVec> {
    let mut out = x.clone();
    for r in rs {
        r.apply_in_place(out.entries_mut())?;
    }
    Ok(out)
}
