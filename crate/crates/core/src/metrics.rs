//! Two-class segmentation metrics and the threshold-sweep ROC protocol.
//!
//! Class 1 is the candidate space, class 0 the background. `n[i][j]` counts
//! pixels of true class `i` predicted as class `j`, and `t_i` is the row sum.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub n: [[u64; 2]; 2],
}

impl ConfusionCounts {
    pub fn tp(&self) -> u64 {
        self.n[1][1]
    }
    pub fn fn_(&self) -> u64 {
        self.n[1][0]
    }
    pub fn fp(&self) -> u64 {
        self.n[0][1]
    }
    pub fn tn(&self) -> u64 {
        self.n[0][0]
    }

    /// Pixels whose true class is `i`.
    pub fn t(&self, i: usize) -> u64 {
        self.n[i][0] + self.n[i][1]
    }

    pub fn total(&self) -> u64 {
        self.t(0) + self.t(1)
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        for i in 0..2 {
            for j in 0..2 {
                self.n[i][j] += other.n[i][j];
            }
        }
    }

    /// Per-class accuracy `n_ii / t_i`, or the vacuous value when `t_i = 0`.
    pub fn class_accuracy(&self, i: usize) -> f64 {
        let t = self.t(i);
        if t == 0 {
            return self.vacuous(i);
        }
        self.n[i][i] as f64 / t as f64
    }

    /// Per-class IoU `n_ii / (t_i + sum_j n_ji - n_ii)`.
    pub fn class_iou(&self, i: usize) -> f64 {
        let predicted = self.n[0][i] + self.n[1][i];
        let union = self.t(i) + predicted - self.n[i][i];
        if self.t(i) == 0 {
            return self.vacuous(i);
        }
        self.n[i][i] as f64 / union as f64
    }

    // A class absent from the truth scores 1 if also never predicted, else 0.
    fn vacuous(&self, i: usize) -> f64 {
        if self.n[0][i] + self.n[1][i] == 0 {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub pixel_accuracy: f64,
    pub mean_accuracy: f64,
    pub mean_iou: f64,
    pub fw_iou: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "pixel_accuracy,mean_accuracy,mean_iou,fw_iou";

    /// Header line plus one data row, six decimals.
    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{:.6},{:.6},{:.6},{:.6}\n",
            Self::CSV_HEADER,
            self.pixel_accuracy,
            self.mean_accuracy,
            self.mean_iou,
            self.fw_iou
        )
    }
}

fn binary_values(t: &Tensor, what: &str) -> Result<()> {
    match t.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(v) => Err(Error::Domain(format!(
            "{what} contains non-binary value {v}"
        ))),
        None => Ok(()),
    }
}

/// Pixel counts of a binary prediction against a binary truth.
pub fn confusion(pred: &Tensor, truth: &Tensor) -> Result<ConfusionCounts> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs truth {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    binary_values(pred, "prediction")?;
    binary_values(truth, "truth")?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        c.n[t as usize][p as usize] += 1;
    }
    Ok(c)
}

pub fn compute_metrics(c: &ConfusionCounts) -> Result<MetricReport> {
    let total = c.total();
    if total == 0 {
        return Err(Error::EmptyInput("confusion matrix has no pixels".into()));
    }
    let total = total as f64;
    let pixel_accuracy = (c.n[0][0] + c.n[1][1]) as f64 / total;
    let mean_accuracy = (c.class_accuracy(0) + c.class_accuracy(1)) / 2.0;
    let iou = [c.class_iou(0), c.class_iou(1)];
    let mean_iou = (iou[0] + iou[1]) / 2.0;
    let fw_iou = (c.t(0) as f64 * iou[0] + c.t(1) as f64 * iou[1]) / total;
    Ok(MetricReport {
        pixel_accuracy,
        mean_accuracy,
        mean_iou,
        fw_iou,
    })
}

/// 1 where `p >= threshold`, else 0.
pub fn binarize(heatmap: &Tensor, threshold: f64) -> Tensor {
    let mut out = heatmap.zeros_like();
    for (o, &p) in out.data_mut().iter_mut().zip(heatmap.data()) {
        if p >= threshold {
            *o = 1.0;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// `0.00, 0.01, ..., 1.00`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per threshold, binarises every heat-map at `p >= θ` and averages the
/// per-image FPR and TPR. Images with no negatives (or positives) contribute
/// 0 to FPR (or TPR) but still count in the mean. Points are returned in
/// descending threshold order.
pub fn roc_sweep(
    heatmaps: &[Tensor],
    truths: &[Tensor],
    thresholds: &[f64],
) -> Result<Vec<RocPoint>> {
    if heatmaps.is_empty() || thresholds.is_empty() {
        return Err(Error::EmptyInput(
            "ROC sweep needs images and thresholds".into(),
        ));
    }
    if heatmaps.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} heat-maps vs {} truths",
            heatmaps.len(),
            truths.len()
        )));
    }
    for (k, (h, t)) in heatmaps.iter().zip(truths).enumerate() {
        if h.shape() != t.shape() {
            return Err(Error::Shape(format!(
                "image {k}: heat-map {:?} vs truth {:?}",
                h.shape(),
                t.shape()
            )));
        }
        binary_values(t, "truth")?;
    }

    let mut sorted = thresholds.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = heatmaps.len() as f64;
    Ok(sorted
        .into_iter()
        .map(|threshold| {
            let (mut fpr, mut tpr) = (0.0, 0.0);
            for (h, t) in heatmaps.iter().zip(truths) {
                let mut c = ConfusionCounts::default();
                for (&p, &y) in h.data().iter().zip(t.data()) {
                    c.n[y as usize][usize::from(p >= threshold)] += 1;
                }
                fpr += rate(c.fp(), c.fp() + c.tn());
                tpr += rate(c.tp(), c.tp() + c.fn_());
            }
            RocPoint {
                threshold,
                fpr: fpr / n,
                tpr: tpr / n,
            }
        })
        .collect())
}

/// Trapezoidal area under the curve through `points` sorted by `(fpr, tpr)`,
/// with `(0, 0)` and `(1, 1)` added when missing.
pub fn auc(points: &[RocPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Domain(format!(
            "AUC needs at least 2 points, got {}",
            points.len()
        )));
    }
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    if !xy.contains(&(0.0, 0.0)) {
        xy.push((0.0, 0.0));
    }
    if !xy.contains(&(1.0, 1.0)) {
        xy.push((1.0, 1.0));
    }
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let area: f64 = xy
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(area.clamp(0.0, 1.0))
}

/// `threshold,fpr,tpr` header and one six-decimal row per point.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{:.6},{:.6},{:.6}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}

/// Minimal SVG of the curve on a unit square, with the axes and diagonal.
pub fn roc_svg(points: &[RocPoint]) -> String {
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let poly: Vec<String> = xy
        .iter()
        .map(|(x, y)| format!("{x:.6},{:.6}", 1.0 - y))
        .collect();
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"-0.05 -0.05 1.1 1.1\" width=\"440\" height=\"440\">\n",
            "<line x1=\"0\" y1=\"1\" x2=\"1\" y2=\"1\" stroke=\"black\" stroke-width=\"0.005\"/>\n",
            "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"1\" stroke=\"black\" stroke-width=\"0.005\"/>\n",
            "<line x1=\"0\" y1=\"1\" x2=\"1\" y2=\"0\" stroke=\"gray\" stroke-width=\"0.003\" stroke-dasharray=\"0.02\"/>\n",
            "<polyline fill=\"none\" stroke=\"crimson\" stroke-width=\"0.008\" points=\"{}\"/>\n",
            "</svg>\n"
        ),
        poly.join(" ")
    )
}
