//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here calls back into the implementation paths it checks.
#![allow(dead_code)]

use deepads_core::layers::{self, ConvParams, LayerCache};
use deepads_core::metrics::{MetricReport, RocPoint};
use deepads_core::{DeepAdsModel, Tensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn random_mask(rng: &mut impl Rng, shape: &[usize], p: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n)
            .map(|_| if rng.gen_bool(p) { 1.0 } else { 0.0 })
            .collect(),
    )
    .unwrap()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central difference of `f` along coordinate `k` of `x`.
pub fn central_diff(x: &Tensor, k: usize, eps: f64, f: impl Fn(&Tensor) -> f64) -> f64 {
    let mut plus = x.clone();
    plus.data_mut()[k] += eps;
    let mut minus = x.clone();
    minus.data_mut()[k] -= eps;
    (f(&plus) - f(&minus)) / (2.0 * eps)
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Max relative error between `analytic` and central differences of `f`
/// over the coordinates of `x` accepted by `keep`.
pub fn max_fd_error(
    x: &Tensor,
    analytic: &Tensor,
    f: impl Fn(&Tensor) -> f64,
    keep: impl Fn(usize) -> bool,
) -> f64 {
    (0..x.len())
        .filter(|&k| keep(k))
        .map(|k| rel_err(analytic.data()[k], central_diff(x, k, FD_EPS, &f)))
        .fold(0.0, f64::max)
}

/// Config for one randomly drawn layer check.
pub struct LayerCase {
    pub h: usize,
    pub w: usize,
    pub c_in: usize,
    pub c_out: usize,
}

pub fn layer_case(rng: &mut impl Rng, even: bool) -> LayerCase {
    let dim = |rng: &mut ChaCha8Rng| {
        if even {
            2 * rng.gen_range(1..=3)
        } else {
            rng.gen_range(1..=6)
        }
    };
    let mut r = ChaCha8Rng::seed_from_u64(rng.gen());
    LayerCase {
        h: dim(&mut r),
        w: dim(&mut r),
        c_in: r.gen_range(1..=3),
        c_out: r.gen_range(1..=3),
    }
}

/// Conv gradients w.r.t. input, weights and bias against finite differences
/// of `L = <r, conv(x)>`.
pub fn conv_fd_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let c = layer_case(&mut rng, false);
    let x = random_tensor(&mut rng, &[c.h, c.w, c.c_in], -1.0, 1.0);
    let wt = random_tensor(&mut rng, &[3, 3, c.c_in, c.c_out], -1.0, 1.0);
    let b = random_tensor(&mut rng, &[c.c_out], -1.0, 1.0);
    let r = random_tensor(&mut rng, &[c.h, c.w, c.c_out], -1.0, 1.0);
    let loss = |x: &Tensor, wt: &Tensor, b: &Tensor| {
        let p = ConvParams::new(wt.clone(), b.clone()).unwrap();
        dot(&r, &conv_oracle(x, &p))
    };
    let p = ConvParams::new(wt.clone(), b.clone()).unwrap();
    let (_, cache) = layers::conv2d_forward(&x, &p).unwrap();
    let g = layers::conv2d_backward(&r, cache, &p).unwrap();
    [
        max_fd_error(&x, &g.input, |x| loss(x, &wt, &b), |_| true),
        max_fd_error(&wt, &g.weights, |wt| loss(&x, wt, &b), |_| true),
        max_fd_error(&b, &g.bias, |b| loss(&x, &wt, b), |_| true),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

pub fn relu_fd_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let c = layer_case(&mut rng, false);
    // Keep inputs clear of the kink so a ±eps probe stays on one side.
    let x = random_tensor(&mut rng, &[c.h, c.w, c.c_in], -1.0, 1.0)
        .map(|v| {
            if v.abs() < 4.0 * FD_EPS {
                v + 8.0 * FD_EPS
            } else {
                v
            }
        })
        .unwrap();
    let r = random_tensor(&mut rng, x.shape(), -1.0, 1.0);
    let (_, cache) = layers::relu(&x);
    let g = layers::relu_backward(&r, cache).unwrap();
    max_fd_error(
        &x,
        &g,
        |x| dot(&r, &x.map(|v| v.max(0.0)).unwrap()),
        |_| true,
    )
}

pub fn sigmoid_fd_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let c = layer_case(&mut rng, false);
    let x = random_tensor(&mut rng, &[c.h, c.w, c.c_in], -4.0, 4.0);
    let r = random_tensor(&mut rng, x.shape(), -1.0, 1.0);
    let (_, cache) = layers::sigmoid(&x);
    let g = layers::sigmoid_backward(&r, cache).unwrap();
    let f = |x: &Tensor| dot(&r, &x.map(|v| 1.0 / (1.0 + (-v).exp())).unwrap());
    max_fd_error(&x, &g, f, |_| true)
}

/// Block maximum by direct enumeration.
pub fn maxpool_oracle(x: &Tensor) -> Tensor {
    let (h, w, c) = x.hwc().unwrap();
    let mut y = Tensor::zeros(&[h / 2, w / 2, c]).unwrap();
    for i in 0..h / 2 {
        for j in 0..w / 2 {
            for ch in 0..c {
                let mut m = f64::NEG_INFINITY;
                for di in 0..2 {
                    for dj in 0..2 {
                        m = m.max(x.get(&[2 * i + di, 2 * j + dj, ch]).unwrap());
                    }
                }
                y.set(&[i, j, ch], m).unwrap();
            }
        }
    }
    y
}

pub fn maxpool_fd_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let c = layer_case(&mut rng, true);
    let x = random_tensor(&mut rng, &[c.h, c.w, c.c_in], -1.0, 1.0);
    let r = random_tensor(&mut rng, &[c.h / 2, c.w / 2, c.c_in], -1.0, 1.0);
    let (_, cache) = layers::maxpool2_forward(&x).unwrap();
    let g = layers::maxpool2_backward(&r, cache).unwrap();
    // Skip whole blocks whose top two values are within 2 eps: a probe there
    // can change the winner.
    let near_tie = |k: usize| {
        let idx = deepads_core::tensor::index_of(x.shape(), k).unwrap();
        let (bi, bj, ch) = (idx[0] / 2 * 2, idx[1] / 2 * 2, idx[2]);
        let mut v: Vec<f64> = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(a, b)| x.get(&[bi + a, bj + b, ch]).unwrap())
            .collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v[0] - v[1] <= 2.0 * FD_EPS
    };
    max_fd_error(&x, &g, |x| dot(&r, &maxpool_oracle(x)), |k| !near_tie(k))
}

pub fn upsample_oracle(x: &Tensor) -> Tensor {
    let (h, w, c) = x.hwc().unwrap();
    let mut y = Tensor::zeros(&[2 * h, 2 * w, c]).unwrap();
    for i in 0..2 * h {
        for j in 0..2 * w {
            for ch in 0..c {
                y.set(&[i, j, ch], x.get(&[i / 2, j / 2, ch]).unwrap())
                    .unwrap();
            }
        }
    }
    y
}

pub fn upsample_fd_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let c = layer_case(&mut rng, false);
    let x = random_tensor(&mut rng, &[c.h, c.w, c.c_in], -1.0, 1.0);
    let r = random_tensor(&mut rng, &[2 * c.h, 2 * c.w, c.c_in], -1.0, 1.0);
    let (_, cache) = layers::upsample2_forward(&x).unwrap();
    let g = layers::upsample2_backward(&r, cache).unwrap();
    max_fd_error(&x, &g, |x| dot(&r, &upsample_oracle(x)), |_| true)
}

/// Weighted binary cross-entropy by a plain per-pixel loop.
pub fn bce_oracle(pred: &Tensor, truth: &Tensor, pos_weight: f64) -> f64 {
    let mut sum = 0.0;
    for (&p, &y) in pred.data().iter().zip(truth.data()) {
        let p = p.clamp(1e-7, 1.0 - 1e-7);
        sum += pos_weight * y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    -sum / pred.len() as f64
}

pub fn bce_fd_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let c = layer_case(&mut rng, false);
    let pred = random_tensor(&mut rng, &[c.h, c.w], 0.2, 0.8);
    let truth = random_mask(&mut rng, &[c.h, c.w], 0.4);
    let pw = rng.gen_range(1.0..5.0);
    let (_, g) = layers::bce_loss(&pred, &truth, pw).unwrap();
    max_fd_error(&pred, &g, |p| bce_oracle(p, &truth, pw), |_| true)
}

/// ReLU sign pattern and max-pool winners of one forward pass; the network
/// is smooth between two parameter settings that share this signature.
fn activation_pattern(m: &DeepAdsModel, x: &Tensor) -> Vec<Vec<usize>> {
    let (_, cache) = m.forward(x).unwrap();
    cache
        .layers()
        .iter()
        .filter_map(|c| match c {
            LayerCache::Relu { input } => {
                Some(input.data().iter().map(|&v| usize::from(v > 0.0)).collect())
            }
            LayerCache::MaxPool { argmax, .. } => Some(argmax.clone()),
            _ => None,
        })
        .collect()
}

pub struct ModelFdReport {
    pub worst: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// End-to-end check on a 16×16 model: BCE of the heat-map against a random
/// mask, differentiated w.r.t. 50 randomly chosen parameters. Probes whose
/// ±eps perturbation changes the activation pattern straddle a kink and are
/// redrawn.
pub fn model_fd_check(seed: u64) -> ModelFdReport {
    let mut rng = rng(seed);
    let model = DeepAdsModel::init(seed, (16, 16)).unwrap();
    let x = random_tensor(&mut rng, &[16, 16, 3], 0.0, 1.0);
    let truth = random_mask(&mut rng, &[16, 16], 0.3);
    let (heat, cache) = model.forward(&x).unwrap();
    let (_, g) = layers::bce_loss(&heat.reshape(&[16, 16]).unwrap(), &truth, 2.0).unwrap();
    let grads = model
        .backward(cache, &g.reshape(&[16, 16, 1]).unwrap())
        .unwrap();
    let base_pattern = activation_pattern(&model, &x);

    let sizes: Vec<usize> = model.param_tensors().map(Tensor::len).collect();
    let total: usize = sizes.iter().sum();
    let analytic: Vec<f64> = grads.tensors().flat_map(|t| t.data().to_vec()).collect();
    let mut report = ModelFdReport {
        worst: 0.0,
        checked: 0,
        skipped: 0,
    };
    while report.checked < 50 {
        assert!(report.skipped < 5000, "no smooth probes found");
        let flat = rng.gen_range(0..total);
        let (mut tensor, mut k) = (0, flat);
        while k >= sizes[tensor] {
            k -= sizes[tensor];
            tensor += 1;
        }
        let perturbed = |delta: f64| {
            let mut m = model.clone();
            let conv = &mut m.convs_mut()[tensor / 2];
            let t = if tensor % 2 == 0 {
                conv.weights_mut()
            } else {
                conv.bias_mut()
            };
            t.data_mut()[k] += delta;
            m
        };
        let (plus, minus) = (perturbed(FD_EPS), perturbed(-FD_EPS));
        if activation_pattern(&plus, &x) != base_pattern
            || activation_pattern(&minus, &x) != base_pattern
        {
            report.skipped += 1;
            continue;
        }
        let loss = |m: &DeepAdsModel| bce_oracle(&m.predict(&x).unwrap(), &truth, 2.0);
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_EPS);
        report.worst = report.worst.max(rel_err(analytic[flat], numeric));
        report.checked += 1;
    }
    report
}

pub fn model_fd_error(seed: u64) -> f64 {
    model_fd_check(seed).worst
}

/// Zero-padded 3×3 convolution by explicit padding and nested loops.
#[allow(clippy::needless_range_loop)]
pub fn conv_oracle(x: &Tensor, p: &ConvParams) -> Tensor {
    let (h, w, c_in) = x.hwc().unwrap();
    let c_out = p.c_out();
    let mut padded = vec![vec![vec![0.0; c_in]; w + 2]; h + 2];
    for i in 0..h {
        for j in 0..w {
            for c in 0..c_in {
                padded[i + 1][j + 1][c] = x.get(&[i, j, c]).unwrap();
            }
        }
    }
    let mut y = Tensor::zeros(&[h, w, c_out]).unwrap();
    for i in 0..h {
        for j in 0..w {
            for o in 0..c_out {
                let mut s = p.bias().data()[o];
                for di in 0..3 {
                    for dj in 0..3 {
                        for c in 0..c_in {
                            s += padded[i + di][j + dj][c]
                                * p.weights().get(&[di, dj, c, o]).unwrap();
                        }
                    }
                }
                y.set(&[i, j, o], s).unwrap();
            }
        }
    }
    y
}

/// Confusion counts by a per-pixel loop with explicit branches.
pub fn confusion_oracle(pred: &[f64], truth: &[f64]) -> [[u64; 2]; 2] {
    let mut n = [[0u64; 2]; 2];
    for (&p, &t) in pred.iter().zip(truth) {
        match (t == 1.0, p == 1.0) {
            (false, false) => n[0][0] += 1,
            (false, true) => n[0][1] += 1,
            (true, false) => n[1][0] += 1,
            (true, true) => n[1][1] += 1,
        }
    }
    n
}

/// The four metrics written straight from their textbook formulas.
pub fn metrics_oracle(n: [[u64; 2]; 2]) -> MetricReport {
    let f = |v: u64| v as f64;
    let t = [f(n[0][0] + n[0][1]), f(n[1][0] + n[1][1])];
    let predicted = [f(n[0][0] + n[1][0]), f(n[0][1] + n[1][1])];
    let total = t[0] + t[1];
    let per_class = |i: usize, num: f64, den: f64| {
        if t[i] == 0.0 {
            if predicted[i] == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            num / den
        }
    };
    let acc: Vec<f64> = (0..2).map(|i| per_class(i, f(n[i][i]), t[i])).collect();
    let iou: Vec<f64> = (0..2)
        .map(|i| per_class(i, f(n[i][i]), t[i] + predicted[i] - f(n[i][i])))
        .collect();
    MetricReport {
        pixel_accuracy: (f(n[0][0]) + f(n[1][1])) / total,
        mean_accuracy: (acc[0] + acc[1]) / 2.0,
        mean_iou: (iou[0] + iou[1]) / 2.0,
        fw_iou: (t[0] * iou[0] + t[1] * iou[1]) / total,
    }
}

/// Area under the piecewise-linear curve through the sorted points (with
/// the endpoints added), by midpoint rectangles on a uniform grid.
pub fn auc_rectangle_oracle(points: &[RocPoint], cells: usize) -> f64 {
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    xy.push((0.0, 0.0));
    xy.push((1.0, 1.0));
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    xy.dedup();
    let mut area = 0.0;
    for seg in xy.windows(2) {
        let ((x0, y0), (x1, y1)) = (seg[0], seg[1]);
        if x1 == x0 {
            continue;
        }
        let dx = (x1 - x0) / cells as f64;
        for k in 0..cells {
            let xm = x0 + (k as f64 + 0.5) * dx;
            area += (y0 + (y1 - y0) * (xm - x0) / (x1 - x0)) * dx;
        }
    }
    area
}

/// Even-odd crossing-number test, coded independently of the library.
pub fn point_in_polygon(poly: &[(f64, f64)], px: f64, py: f64) -> bool {
    let mut crossings = 0;
    for i in 0..poly.len() {
        let (x1, y1) = poly[i];
        let (x2, y2) = poly[(i + 1) % poly.len()];
        let straddles = (y1 <= py && py < y2) || (y2 <= py && py < y1);
        if straddles {
            let t = (py - y1) / (y2 - y1);
            if x1 + t * (x2 - x1) > px {
                crossings += 1;
            }
        }
    }
    crossings % 2 == 1
}

/// Random convex quad: four angles around an ellipse, sorted.
pub fn random_convex_quad(rng: &mut impl Rng, h: f64, w: f64) -> [(f64, f64); 4] {
    loop {
        let cx = rng.gen_range(0.2 * w..0.8 * w);
        let cy = rng.gen_range(0.2 * h..0.8 * h);
        // Radii keep the quad inside the frame.
        let rx = rng.gen_range(0.1 * w..0.4 * w).min(cx.min(w - cx));
        let ry = rng.gen_range(0.1 * h..0.4 * h).min(cy.min(h - cy));
        let mut a: Vec<f64> = (0..4)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        a.sort_by(f64::total_cmp);
        let q = [0, 1, 2, 3].map(|k| (cx + rx * a[k].cos(), cy + ry * a[k].sin()));
        // Reject near-degenerate draws with two almost coincident angles.
        let gaps_ok = (0..4).all(|k| {
            let next = if k == 3 {
                a[0] + std::f64::consts::TAU
            } else {
                a[k + 1]
            };
            next - a[k] > 0.2
        });
        if gaps_ok {
            return q;
        }
    }
}
