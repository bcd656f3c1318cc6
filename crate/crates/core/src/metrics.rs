//! Depth-estimation error metrics over matched prediction / ground-truth pairs.

use serde::{Deserialize, Serialize};

use crate::depth_gt::DepthBinSpec;
use crate::error::{Error, Result};
use crate::tensor::FeatureGrid;

/// How a per-pixel depth distribution is reduced to one depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DepthReduction {
    /// Probability-weighted mean of bin centers.
    #[default]
    Expectation,
    /// Center of the most probable bin; ties go to the lowest bin.
    Argmax,
}

/// Reduces a `bins × H × W` distribution to an `H × W` row-major depth map.
pub fn extract_depth_scalar(dist: &FeatureGrid, bins: &DepthBinSpec, mode: DepthReduction) -> Vec<f64> {
    let (nb, plane) = (dist.channels(), dist.plane());
    let centers = bins.centers();
    let data = dist.data();
    (0..plane)
        .map(|px| match mode {
            DepthReduction::Expectation => (0..nb).map(|j| data[j * plane + px] * centers[j]).sum(),
            DepthReduction::Argmax => {
                let mut best = 0;
                for j in 1..nb {
                    if data[j * plane + px] > data[best * plane + px] {
                        best = j;
                    }
                }
                centers[best]
            }
        })
        .collect()
}

/// Matched depths; all strictly positive and of equal, nonzero length.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthEvalPairs {
    pred: Vec<f64>,
    gt: Vec<f64>,
}

impl DepthEvalPairs {
    pub fn new(pred: Vec<f64>, gt: Vec<f64>) -> Result<Self> {
        if pred.len() != gt.len() || pred.is_empty() {
            return Err(Error::Validation {
                module: "depth_metrics",
                index: pred.len().min(gt.len()),
                message: format!("{} predictions for {} targets", pred.len(), gt.len()),
            });
        }
        for (i, (&p, &g)) in pred.iter().zip(&gt).enumerate() {
            if !(p > 0.0 && g > 0.0 && p.is_finite() && g.is_finite()) {
                return Err(Error::Validation {
                    module: "depth_metrics",
                    index: i,
                    message: format!("depths must be positive (pred {p}, gt {g})"),
                });
            }
        }
        Ok(Self { pred, gt })
    }

    pub fn len(&self) -> usize {
        self.pred.len()
    }
    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }
    pub fn pred(&self) -> &[f64] {
        &self.pred
    }
    pub fn gt(&self) -> &[f64] {
        &self.gt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    /// Scale-invariant log error, ×100.
    pub silog: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub log10: f64,
    pub rmse: f64,
    pub count: usize,
}

impl DepthMetrics {
    pub const CSV_HEADER: &'static str = "silog,abs_rel,sq_rel,log10,rmse,count";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.silog, self.abs_rel, self.sq_rel, self.log10, self.rmse, self.count
        )
    }
}

pub fn compute_metrics(pairs: &DepthEvalPairs) -> DepthMetrics {
    let n = pairs.len() as f64;
    let (mut e_sum, mut e2_sum) = (0.0, 0.0);
    let (mut abs_rel, mut sq_rel, mut log10, mut sq) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &g) in pairs.pred.iter().zip(&pairs.gt) {
        let e = p.ln() - g.ln();
        e_sum += e;
        e2_sum += e * e;
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        log10 += (p.log10() - g.log10()).abs();
        sq += diff * diff;
    }
    let mean_e = e_sum / n;
    // clamp: cancellation can leave a tiny negative variance
    let var = (e2_sum / n - mean_e * mean_e).max(0.0);
    DepthMetrics {
        silog: 100.0 * var.sqrt(),
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        log10: log10 / n,
        rmse: (sq / n).sqrt(),
        count: pairs.len(),
    }
}
