use super::{feature_sign, CostVector, FEATURE_NAMES, NUM_FEATURES};
use crate::error::{PlanError, Result};
use serde::{Deserialize, Serialize};

pub const REGISTRY_VERSION: u32 = 1;
pub const NUM_BEHAVIORS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightVariant {
    Shared,
    PerBehavior,
    PerBehaviorPerTimestep,
}

/// Positive weights in one of three layouts. `rows` is the number of
/// timestep rows (steps + 1) and only matters for the per-timestep layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub registry_version: u32,
    pub variant: WeightVariant,
    pub rows: usize,
    #[serde(default = "feature_names")]
    pub features: Vec<String>,
    pub weights: Vec<f64>,
}

fn feature_names() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Hand-tuned starting weights.
pub const DEFAULT_WEIGHTS: [f64; NUM_FEATURES] = [
    1000.0, // overlap
    0.02,   // obstacle
    0.05,   // obstacle_vulnerable
    2.0,    // path
    50.0,   // lane_left
    50.0,   // lane_right
    1.0,    // headway
    50.0,   // yield_pedestrian
    50.0,   // yield_crossing
    50.0,   // yield_stop_line
    20.0,   // route_lanechange
    0.1,    // route_deadend
    5.0,    // cost_to_go
    5.0,    // speed
    1.0,    // progress
    0.1,    // jerk
    1.0,    // jerk_violation_pos
    1.0,    // jerk_violation_neg
    0.1,    // accel
    1.0,    // accel_violation
    1.0,    // decel_violation
    0.1,    // lat_accel
    1.0,    // lat_accel_violation_left
    1.0,    // lat_accel_violation_right
    0.1,    // lat_jerk
    1.0,    // lat_jerk_violation_left
    1.0,    // lat_jerk_violation_right
    10.0,   // curvature
    10.0,   // twist
    10.0,   // wrench
];

impl WeightScheme {
    pub fn expected_len(variant: WeightVariant, rows: usize) -> usize {
        match variant {
            WeightVariant::Shared => NUM_FEATURES,
            WeightVariant::PerBehavior => NUM_BEHAVIORS * NUM_FEATURES,
            WeightVariant::PerBehaviorPerTimestep => NUM_BEHAVIORS * rows * NUM_FEATURES,
        }
    }

    /// Tiles one feature vector into the requested layout.
    pub fn from_vector(variant: WeightVariant, rows: usize, w: &[f64; NUM_FEATURES]) -> Self {
        let n = Self::expected_len(variant, rows) / NUM_FEATURES;
        let weights = (0..n).flat_map(|_| w.iter().copied()).collect();
        Self {
            registry_version: REGISTRY_VERSION,
            variant,
            rows,
            features: feature_names(),
            weights,
        }
    }

    pub fn shared(w: &[f64; NUM_FEATURES]) -> Self {
        Self::from_vector(WeightVariant::Shared, 0, w)
    }

    pub fn default_shared() -> Self {
        Self::shared(&DEFAULT_WEIGHTS)
    }

    pub fn uniform(variant: WeightVariant, rows: usize, value: f64) -> Self {
        Self::from_vector(variant, rows, &[value; NUM_FEATURES])
    }

    /// Re-tiles the weights into another layout; shared weights expand to
    /// every behavior and timestep, and coarser layouts average.
    pub fn to_variant(&self, variant: WeightVariant, rows: usize) -> Self {
        let mut out = Self::uniform(variant, rows, 0.0);
        let blocks = Self::expected_len(variant, rows) / NUM_FEATURES;
        for blk in 0..blocks {
            let (b, t) = match variant {
                WeightVariant::Shared => (usize::MAX, usize::MAX),
                WeightVariant::PerBehavior => (blk, usize::MAX),
                WeightVariant::PerBehaviorPerTimestep => (blk / rows, blk % rows),
            };
            let src: Vec<[f64; NUM_FEATURES]> = match (self.variant, b, t) {
                (_, usize::MAX, _) => (0..NUM_BEHAVIORS)
                    .flat_map(|bb| (0..self.rows.max(1)).map(move |tt| (bb, tt)))
                    .map(|(bb, tt)| self.slice_array(bb, tt))
                    .collect(),
                (_, b, usize::MAX) => (0..self.rows.max(1))
                    .map(|tt| self.slice_array(b, tt))
                    .collect(),
                (_, b, t) => vec![self.slice_array(b, t)],
            };
            for k in 0..NUM_FEATURES {
                let mean = src.iter().map(|s| s[k]).sum::<f64>() / src.len() as f64;
                out.weights[blk * NUM_FEATURES + k] = mean;
            }
        }
        out
    }

    fn offset(&self, behavior: usize, t: usize) -> usize {
        match self.variant {
            WeightVariant::Shared => 0,
            WeightVariant::PerBehavior => behavior * NUM_FEATURES,
            WeightVariant::PerBehaviorPerTimestep => {
                let t = t.min(self.rows.saturating_sub(1));
                (behavior * self.rows + t) * NUM_FEATURES
            }
        }
    }

    /// Weights applied to row `t` of behavior `behavior`.
    pub fn slice(&self, behavior: usize, t: usize) -> &[f64] {
        let o = self.offset(behavior, t);
        &self.weights[o..o + NUM_FEATURES]
    }

    fn slice_array(&self, behavior: usize, t: usize) -> [f64; NUM_FEATURES] {
        let s = self.slice(behavior, t);
        std::array::from_fn(|k| s[k])
    }

    /// Signed weight of every (row, feature) slot, the coefficients of the
    /// objective in the feature matrix.
    pub fn signed_rows(&self, behavior: usize, rows: usize) -> Vec<[f64; NUM_FEATURES]> {
        (0..rows)
            .map(|t| {
                let s = self.slice(behavior, t);
                std::array::from_fn(|k| feature_sign(k) * s[k])
            })
            .collect()
    }

    /// Adds `scale * d total_cost / d w` for the given cost vector to `out`.
    pub fn accumulate_grad(&self, behavior: usize, c: &CostVector, scale: f64, out: &mut [f64]) {
        for (t, row) in c.rows.iter().enumerate() {
            let o = self.offset(behavior, t);
            for k in 0..NUM_FEATURES {
                out[o + k] += scale * feature_sign(k) * row[k];
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.registry_version != REGISTRY_VERSION {
            return Err(PlanError::Registry(format!(
                "weights use registry version {}, this build expects {REGISTRY_VERSION}",
                self.registry_version
            )));
        }
        if self.features.len() != NUM_FEATURES
            || self.features.iter().zip(FEATURE_NAMES).any(|(a, b)| a != b)
        {
            return Err(PlanError::Registry(
                "feature list does not match the registry".into(),
            ));
        }
        let want = Self::expected_len(self.variant, self.rows);
        if self.weights.len() != want {
            return Err(PlanError::Registry(format!(
                "{:?} weights need {want} entries, found {}",
                self.variant,
                self.weights.len()
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(PlanError::Registry(format!(
                "weight {w} is not strictly positive"
            )));
        }
        Ok(())
    }

    /// Multiplicative update `w <- w * exp(-alpha * g)`, kept inside the
    /// positive normal range of `f64`.
    pub fn exp_update(&mut self, g: &[f64], alpha: f64) {
        for (w, gi) in self.weights.iter_mut().zip(g) {
            let next = *w * (-alpha * gi).exp();
            *w = if next.is_nan() {
                *w
            } else {
                next.clamp(1e-300, 1e300)
            };
        }
    }
}
