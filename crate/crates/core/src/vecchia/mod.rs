//! Vecchia approximation: ordering, conditioning sets, the sparse inverse
//! Cholesky factor `U`, and the approximate likelihood with its score.
//!
//! Everything downstream of [`VecchiaLayout`] works on points and responses
//! already permuted into the ordering, so position `i` conditions on a subset
//! of positions `0..i`.

mod condsets;
mod factor;
pub mod kdtree;
mod ordering;
mod score;
pub mod sidecar;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;

pub use condsets::{build_conditioning_sets, conditioning_sets_scaled, CondSets};
pub use factor::{compute_u, simulate_vecchia, vecchia_loglik, SparseU, VecchiaFactor};
pub use ordering::{maximin_exhaustive, maximin_order, maximin_tree, random_order, EXHAUSTIVE_BELOW};
pub use score::{vecchia_loglik_grad, vecchia_score, ScoreLevel, VecchiaScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OrderingKind {
    #[default]
    Maximin,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VecchiaConfig {
    /// Conditioning-set size used for estimation.
    pub m_fit: usize,
    /// Neighbor count used for prediction.
    pub m_predict: usize,
    /// Per-dimension weights for ordering and neighbor search; `None` uses the
    /// reciprocal sample standard deviation of each input dimension.
    pub scaling: Option<Vec<f64>>,
    /// Rebuild the conditioning sets with the fitted ranges once, then resume the fit.
    pub rescale_once: bool,
    pub ordering: OrderingKind,
}

impl Default for VecchiaConfig {
    fn default() -> Self {
        VecchiaConfig {
            m_fit: 30,
            m_predict: 100,
            scaling: None,
            rescale_once: false,
            ordering: OrderingKind::Maximin,
        }
    }
}

impl VecchiaConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.m_fit == 0 || self.m_predict == 0 {
            return Err(Error::InvalidParams("m_fit and m_predict must be at least 1".into()));
        }
        if let Some(s) = &self.scaling {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.len(),
                });
            }
            if s.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                return Err(Error::InvalidParams("scaling weights must be positive".into()));
            }
        }
        Ok(())
    }

    /// The configured scaling, or the reciprocal standard deviations of `points`.
    pub fn scaling_for(&self, points: &PointSet) -> Vec<f64> {
        match &self.scaling {
            Some(s) => s.clone(),
            None => default_scaling(points),
        }
    }
}

/// `1 / sd` per dimension; constant dimensions get weight 1.
pub fn default_scaling(points: &PointSet) -> Vec<f64> {
    points
        .column_sd()
        .into_iter()
        .enumerate()
        .map(|(k, sd)| {
            if sd > 0.0 && sd.is_finite() {
                1.0 / sd
            } else {
                log::warn!("input dimension {k} is constant; using unit scaling");
                1.0
            }
        })
        .collect()
}

/// Ordering and conditioning sets for one point set.
#[derive(Debug, Clone, PartialEq)]
pub struct VecchiaLayout {
    /// `order[i]` is the original index of the point at position `i`.
    pub order: Vec<usize>,
    pub cond_sets: CondSets,
    pub scaling: Vec<f64>,
    pub m: usize,
}

impl VecchiaLayout {
    pub fn build(points: &PointSet, m: usize, scaling: &[f64], ordering: OrderingKind, seed: u64) -> Self {
        let scaled = points.scaled(scaling);
        let order = match ordering {
            OrderingKind::Maximin => maximin_order(&scaled),
            OrderingKind::Random => random_order(points.len(), seed),
        };
        let cond_sets = conditioning_sets_scaled(&scaled.select(&order), m);
        VecchiaLayout {
            order,
            cond_sets,
            scaling: scaling.to_vec(),
            m,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn ordered_points(&self, points: &PointSet) -> PointSet {
        points.select(&self.order)
    }

    pub fn ordered_values(&self, z: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&i| z[i]).collect()
    }
}
