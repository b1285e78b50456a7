//! Generic forward and reverse passes over the flat parameter layout.

use super::scalar::Scalar;

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const PROB_FLOOR: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenseSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub biases: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NormSlot {
    pub width: usize,
    pub scale: usize,
    pub shift: usize,
}

/// Offsets of every tensor inside a `ParamVector`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub dense: Vec<DenseSlot>,
    pub norm: Vec<NormSlot>,
    pub len: usize,
}

impl Layout {
    pub fn new(input_dim: usize, hidden: &[usize], classes: usize, batchnorm: bool) -> Layout {
        let mut dense = Vec::with_capacity(hidden.len() + 1);
        let mut off = 0;
        let mut fan_in = input_dim;
        for &fan_out in hidden.iter().chain(std::iter::once(&classes)) {
            let weights = off;
            off += fan_in * fan_out;
            let biases = off;
            off += fan_out;
            dense.push(DenseSlot {
                fan_in,
                fan_out,
                weights,
                biases,
            });
            fan_in = fan_out;
        }
        let mut norm = Vec::new();
        if batchnorm {
            for &width in hidden {
                norm.push(NormSlot {
                    width,
                    scale: off,
                    shift: off + width,
                });
                off += 2 * width;
            }
        }
        Layout {
            dense,
            norm,
            len: off,
        }
    }

    pub fn batchnorm(&self) -> bool {
        !self.norm.is_empty()
    }
}

struct Hidden<S> {
    input: Vec<S>,
    /// ReLU input (after normalization when enabled).
    pre: Vec<S>,
    xhat: Vec<S>,
    inv_std: Vec<S>,
}

struct Trace<S> {
    hidden: Vec<Hidden<S>>,
    last_input: Vec<S>,
    logits: Vec<S>,
}

fn dense<S: Scalar>(params: &[S], slot: &DenseSlot, x: &[S], rows: usize) -> Vec<S> {
    let (n_in, n_out) = (slot.fan_in, slot.fan_out);
    let w = &params[slot.weights..slot.weights + n_in * n_out];
    let b = &params[slot.biases..slot.biases + n_out];
    let mut z = Vec::with_capacity(rows * n_out);
    for r in 0..rows {
        let xr = &x[r * n_in..(r + 1) * n_in];
        for j in 0..n_out {
            let wj = &w[j * n_in..(j + 1) * n_in];
            let mut acc = b[j];
            for (wi, xi) in wj.iter().zip(xr) {
                acc += *wi * *xi;
            }
            z.push(acc);
        }
    }
    z
}

fn batch_norm<S: Scalar>(
    params: &[S],
    slot: &NormSlot,
    z: &[S],
    rows: usize,
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let width = slot.width;
    let n = rows as f64;
    let mut xhat = vec![S::zero(); rows * width];
    let mut out = vec![S::zero(); rows * width];
    let mut inv_std = Vec::with_capacity(width);
    for j in 0..width {
        let mut mean = S::zero();
        for r in 0..rows {
            mean += z[r * width + j];
        }
        mean = mean * (1.0 / n);
        let mut var = S::zero();
        for r in 0..rows {
            let c = z[r * width + j] - mean;
            var += c * c;
        }
        var = var * (1.0 / n);
        let inv = S::cst(1.0) / (var + S::cst(BN_EPS)).sqrt();
        let (gamma, beta) = (params[slot.scale + j], params[slot.shift + j]);
        for r in 0..rows {
            let k = r * width + j;
            let xh = (z[k] - mean) * inv;
            xhat[k] = xh;
            out[k] = gamma * xh + beta;
        }
        inv_std.push(inv);
    }
    (out, xhat, inv_std)
}

fn forward<S: Scalar>(layout: &Layout, params: &[S], inputs: &[f64], rows: usize) -> Trace<S> {
    let mut act: Vec<S> = inputs.iter().map(|&x| S::cst(x)).collect();
    let n_hidden = layout.dense.len() - 1;
    let mut hidden = Vec::with_capacity(n_hidden);
    for l in 0..n_hidden {
        let z = dense(params, &layout.dense[l], &act, rows);
        let (pre, xhat, inv_std) = match layout.norm.get(l) {
            Some(slot) => batch_norm(params, slot, &z, rows),
            None => (z, Vec::new(), Vec::new()),
        };
        let next: Vec<S> = pre
            .iter()
            .map(|&v| if v.re() > 0.0 { v } else { S::zero() })
            .collect();
        hidden.push(Hidden {
            input: std::mem::replace(&mut act, next),
            pre,
            xhat,
            inv_std,
        });
    }
    let logits = dense(params, &layout.dense[n_hidden], &act, rows);
    Trace {
        hidden,
        last_input: act,
        logits,
    }
}

/// Row-wise softmax of the output layer, as plain reals.
pub(crate) fn probabilities(layout: &Layout, params: &[f64], inputs: &[f64], rows: usize) -> Vec<f64> {
    let trace = forward::<f64>(layout, params, inputs, rows);
    let classes = layout.dense.last().map(|s| s.fan_out).unwrap_or(0);
    let mut out = Vec::with_capacity(rows * classes);
    for row in trace.logits.chunks(classes) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|z| (z - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / sum));
    }
    out
}

/// Mean clamped cross-entropy and, if requested, the logit adjoints.
fn cross_entropy<S: Scalar>(
    logits: &[S],
    labels: &[usize],
    classes: usize,
    want_adjoint: bool,
) -> (S, Vec<S>) {
    let rows = labels.len();
    let inv_n = 1.0 / rows as f64;
    let floor_loss = -PROB_FLOOR.ln();
    let mut total = S::zero();
    let mut adj = if want_adjoint {
        vec![S::zero(); logits.len()]
    } else {
        Vec::new()
    };
    for (r, &y) in labels.iter().enumerate() {
        let row = &logits[r * classes..(r + 1) * classes];
        let m = row.iter().map(|z| z.re()).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = S::zero();
        for &z in row {
            sum += (z - S::cst(m)).exp();
        }
        let lse = sum.ln() + S::cst(m);
        let log_py = row[y] - lse;
        if log_py.re().exp() < PROB_FLOOR {
            // clamped: constant loss, zero derivative
            total += S::cst(floor_loss);
            continue;
        }
        total -= log_py;
        if want_adjoint {
            for c in 0..classes {
                let mut g = (row[c] - lse).exp();
                if c == y {
                    g -= S::cst(1.0);
                }
                adj[r * classes + c] = g * inv_n;
            }
        }
    }
    (total * inv_n, adj)
}

pub(crate) fn loss<S: Scalar>(layout: &Layout, params: &[S], inputs: &[f64], labels: &[usize]) -> S {
    let trace = forward(layout, params, inputs, labels.len());
    let classes = layout.dense.last().map(|s| s.fan_out).unwrap_or(0);
    cross_entropy(&trace.logits, labels, classes, false).0
}

/// Loss and its exact gradient by reverse accumulation.
pub(crate) fn loss_and_grad<S: Scalar>(
    layout: &Layout,
    params: &[S],
    inputs: &[f64],
    labels: &[usize],
) -> (S, Vec<S>) {
    let rows = labels.len();
    let trace = forward(layout, params, inputs, rows);
    let n_dense = layout.dense.len();
    let classes = layout.dense[n_dense - 1].fan_out;
    let (value, mut dz) = cross_entropy(&trace.logits, labels, classes, true);
    let mut grad = vec![S::zero(); layout.len];

    for l in (0..n_dense).rev() {
        let slot = layout.dense[l];
        let (n_in, n_out) = (slot.fan_in, slot.fan_out);
        let x: &[S] = if l + 1 == n_dense {
            &trace.last_input
        } else {
            &trace.hidden[l].input
        };

        for r in 0..rows {
            let xr = &x[r * n_in..(r + 1) * n_in];
            for j in 0..n_out {
                let d = dz[r * n_out + j];
                grad[slot.biases + j] += d;
                let gw = &mut grad[slot.weights + j * n_in..slot.weights + (j + 1) * n_in];
                for (g, xi) in gw.iter_mut().zip(xr) {
                    *g += d * *xi;
                }
            }
        }
        if l == 0 {
            break;
        }

        // adjoint of the previous hidden activation
        let w = &params[slot.weights..slot.weights + n_in * n_out];
        let mut da = vec![S::zero(); rows * n_in];
        for r in 0..rows {
            let dar = &mut da[r * n_in..(r + 1) * n_in];
            for j in 0..n_out {
                let d = dz[r * n_out + j];
                for (a, wi) in dar.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                    *a += d * *wi;
                }
            }
        }

        let h = &trace.hidden[l - 1];
        let width = n_in;
        for (a, pre) in da.iter_mut().zip(&h.pre) {
            if pre.re() <= 0.0 {
                *a = S::zero();
            }
        }
        dz = match layout.norm.get(l - 1) {
            None => da,
            Some(ns) => {
                let n = rows as f64;
                let mut out = vec![S::zero(); rows * width];
                for j in 0..width {
                    let gamma = params[ns.scale + j];
                    let mut sum_dy = S::zero();
                    let mut sum_dy_xhat = S::zero();
                    for r in 0..rows {
                        let k = r * width + j;
                        sum_dy += da[k];
                        sum_dy_xhat += da[k] * h.xhat[k];
                    }
                    grad[ns.scale + j] += sum_dy_xhat;
                    grad[ns.shift + j] += sum_dy;
                    let scale = gamma * h.inv_std[j] * (1.0 / n);
                    for r in 0..rows {
                        let k = r * width + j;
                        out[k] = scale * (da[k] * n - sum_dy - h.xhat[k] * sum_dy_xhat);
                    }
                }
                out
            }
        };
    }
    (value, grad)
}
