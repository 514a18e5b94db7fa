//! Multinomial logistic regression trained by seeded minibatch SGD for a
//! fixed epoch budget. Stochasticity enters only through initialization and
//! batch order, both keyed by the training seed, so repeated training on a
//! fixed subset is reproducible and its run-to-run variance is what the OPT
//! estimate measures.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::data::TrainingSet;
use crate::error::Result;
use crate::rng::row_rng;

use super::TrainedModel;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticHp {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub init_scale: f64,
}

impl Default for LogisticHp {
    fn default() -> Self {
        LogisticHp { epochs: 4, lr: 0.5, batch: 16, init_scale: 0.2 }
    }
}

impl LogisticHp {
    pub fn from_map(hp: &BTreeMap<String, f64>) -> Self {
        let d = LogisticHp::default();
        LogisticHp {
            epochs: hp.get("epochs").map_or(d.epochs, |&v| v as usize),
            lr: hp.get("lr").copied().unwrap_or(d.lr),
            batch: hp.get("batch").map_or(d.batch, |&v| (v as usize).max(1)),
            init_scale: hp.get("init_scale").copied().unwrap_or(d.init_scale),
        }
    }
}

pub(super) fn train(
    data: &TrainingSet,
    idx: &[usize],
    labels: &[usize],
    hp: &LogisticHp,
    seed: u64,
) -> Result<TrainedModel> {
    let c = data.num_classes;
    let f = data.feature_dim();
    let n = idx.len();
    let mut rng = row_rng(seed, 0x10615);

    let mut w = Array2::<f64>::zeros((c, f));
    for v in w.iter_mut() {
        *v = crate::rng::next_normal(&mut rng) * hp.init_scale;
    }
    let mut b = Array1::<f64>::zeros(c);

    let mut order: Vec<usize> = (0..n).collect();
    let mut probs = Array1::<f64>::zeros(c);
    for _epoch in 0..hp.epochs {
        // in-place Fisher-Yates shuffle from the same stream
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(hp.batch) {
            let scale = hp.lr / chunk.len() as f64;
            // accumulate the minibatch gradient step directly into (w, b)
            let mut gw = Array2::<f64>::zeros((c, f));
            let mut gb = Array1::<f64>::zeros(c);
            for &r in chunk {
                let x = data.features.row(idx[r]);
                let z = w.dot(&x) + &b;
                let zmax = z.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                let mut denom = 0.0;
                for k in 0..c {
                    probs[k] = (z[k] - zmax).exp();
                    denom += probs[k];
                }
                for k in 0..c {
                    let mut g = probs[k] / denom;
                    if k == labels[r] {
                        g -= 1.0;
                    }
                    if g != 0.0 {
                        gw.row_mut(k).scaled_add(g, &x);
                        gb[k] += g;
                    }
                }
            }
            w.scaled_add(-scale, &gw);
            b.scaled_add(-scale, &gb);
        }
    }

    let mut present = vec![false; c];
    for &lab in labels {
        present[lab] = true;
    }
    Ok(TrainedModel { weights: w, bias: b, degenerate: present.iter().filter(|&&p| p).count() < 2 })
}
