//! Multi-target LASSO solved by minibatch SAGA with proximal
//! soft-thresholding. All targets stream the same mask matrix; per-target
//! solver state is independent, so targets are processed in fixed-size
//! chunks that run in parallel without affecting results.
//!
//! Objective per target (kept rows R_t of the fit range, |R_t| = M_t):
//!   (1/M_t) sum_{i in R_t} (w . v_i + b - y_i)^2 + lambda_t ||w||_1
//! with the bias unpenalized and recentered exactly once per epoch.

use ndarray::{s, Array1, Array2};
use rand::Rng;

use crate::data::{Datamodel, MaskMatrix, OutputMatrix};
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::row_rng;

use super::{RegularizationPath, SplitSpec};

#[derive(Debug, Clone)]
pub struct LassoOptions {
    /// Explicit shared path; None computes a per-target grid from the
    /// smallest all-zero lambda.
    pub path: Option<RegularizationPath>,
    /// Grid length when the path is auto-computed.
    pub path_len: usize,
    /// Epoch-to-epoch max parameter change declaring convergence.
    pub tol: f64,
    /// KKT residual required at convergence.
    pub kkt_tol: f64,
    /// Epoch cap per lambda fit (each epoch visits the fit rows once).
    /// Small fits get a floor of 100k total row visits, since a 50-epoch
    /// budget only suffices at campaign scale.
    pub max_epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Fixed target-chunk width; parallelism never changes results.
    pub target_chunk: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            path: None,
            path_len: 100,
            tol: 1e-7,
            kkt_tol: 1e-6,
            max_epochs: 50,
            batch: 32,
            seed: 0,
            target_chunk: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub target_id: u64,
    /// (lambda, validation MSE) along the path, in fit order.
    pub val_mse_path: Vec<(f64, f64)>,
    pub chosen_lambda: f64,
    pub train_mse: f64,
    pub heldout_mse: f64,
    pub sparsity: usize,
    /// Total epochs spent across the path and the refit.
    pub epochs: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

/// Per-target data for one chunk of targets.
struct ChunkData<'a> {
    masks: &'a MaskMatrix,
    /// m x t values
    y: Array2<f64>,
    /// m x t keep flags (true = row usable for this target)
    keep: Vec<bool>,
    targets: std::ops::Range<usize>,
}

impl ChunkData<'_> {
    fn t(&self) -> usize {
        self.targets.len()
    }

    fn kept(&self, i: usize, t: usize) -> bool {
        self.keep[i * self.t() + t]
    }
}

struct SagaState {
    w: Array2<f64>,
    b: Array1<f64>,
    epochs: usize,
}

struct SolveOutcome {
    converged: Vec<bool>,
    kkt: Vec<f64>,
}

/// Dense row blocks over `rows`, batch-sized with the remainder folded into
/// the final block.
fn dense_blocks(masks: &MaskMatrix, rows: std::ops::Range<usize>, batch: usize) -> Vec<(usize, Array2<f64>)> {
    let mut blocks = Vec::new();
    let len = rows.len();
    if len == 0 {
        return blocks;
    }
    let k = (len / batch).max(1);
    let mut start = rows.start;
    for c in 0..k {
        let end = if c + 1 == k { rows.end } else { start + batch };
        blocks.push((start, masks.dense_block(start..end)));
        start = end;
    }
    blocks
}

/// Runs SAGA on one target chunk until every target converges (parameter
/// change < tol and KKT residual <= kkt_tol) or the epoch cap is hit.
#[allow(clippy::too_many_arguments)]
fn saga_fit(
    data: &ChunkData,
    fit_rows: std::ops::Range<usize>,
    lambdas: &[f64],
    state: &mut SagaState,
    opts: &LassoOptions,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<SolveOutcome> {
    let t = data.t();
    let d = data.masks.d;
    let blocks = dense_blocks(data.masks, fit_rows.clone(), opts.batch);
    let k_chunks = blocks.len();
    if k_chunks == 0 {
        return Err(Error::InvalidParam("empty fit range".into()));
    }

    // per-target usable-row counts and gradient scales
    let mut m_t = vec![0usize; t];
    for i in fit_rows.clone() {
        for tt in 0..t {
            if data.kept(i, tt) {
                m_t[tt] += 1;
            }
        }
    }
    if let Some(bad) = m_t.iter().position(|&c| c == 0) {
        return Err(Error::Degenerate(format!(
            "target {} has no usable rows in the fit range",
            data.targets.start + bad
        )));
    }

    let l_hat = fit_rows
        .clone()
        .map(|i| data.masks.row_cardinality(i))
        .max()
        .unwrap()
        .max(1) as f64;
    let gamma = 1.0 / (3.0 * l_hat);

    // residual block at current parameters, exclusions zeroed
    let block_residual = |blk: usize, state: &SagaState| -> Array2<f64> {
        let (start, v) = &blocks[blk];
        let rows = v.nrows();
        let mut p = v.dot(&state.w);
        for r in 0..rows {
            for tt in 0..t {
                if data.kept(start + r, tt) {
                    p[(r, tt)] += state.b[tt] - data.y[(start + r, tt)];
                } else {
                    p[(r, tt)] = 0.0;
                }
            }
        }
        p
    };
    let chunk_gradient = |blk: usize, state: &SagaState| -> Array2<f64> {
        let (_, v) = &blocks[blk];
        let p = block_residual(blk, state);
        let mut g = v.t().dot(&p);
        for tt in 0..t {
            let scale = 2.0 * k_chunks as f64 / m_t[tt] as f64;
            g.column_mut(tt).mapv_inplace(|x| x * scale);
        }
        g
    };

    // initialize the gradient memory at the incoming iterate
    let mut memory: Vec<Array2<f64>> = (0..k_chunks).map(|c| chunk_gradient(c, state)).collect();
    let mut avg = Array2::<f64>::zeros((d, t));
    for g in &memory {
        avg += g;
    }
    avg.mapv_inplace(|x| x / k_chunks as f64);

    let full_gradient = |state: &SagaState| -> Array2<f64> {
        let mut g = Array2::<f64>::zeros((d, t));
        for c in 0..k_chunks {
            let (_, v) = &blocks[c];
            let p = block_residual(c, state);
            g += &v.t().dot(&p);
        }
        for tt in 0..t {
            let scale = 2.0 / m_t[tt] as f64;
            g.column_mut(tt).mapv_inplace(|x| x * scale);
        }
        g
    };
    let kkt_residuals = |state: &SagaState| -> Vec<f64> {
        let g = full_gradient(state);
        (0..t)
            .map(|tt| {
                let lam = lambdas[tt];
                let mut worst = 0.0f64;
                for j in 0..d {
                    let r = if state.w[(j, tt)] == 0.0 {
                        (g[(j, tt)].abs() - lam).max(0.0)
                    } else {
                        (g[(j, tt)] + lam * state.w[(j, tt)].signum()).abs()
                    };
                    worst = worst.max(r);
                }
                worst
            })
            .collect()
    };

    let epoch_cap = opts.max_epochs.max(100_000usize.div_ceil(fit_rows.len().max(1)));
    let mut outcome = SolveOutcome { converged: vec![false; t], kkt: vec![f64::INFINITY; t] };
    for _epoch in 0..epoch_cap {
        let w_prev = state.w.clone();
        let b_prev = state.b.clone();
        for _step in 0..k_chunks {
            let j = rng.random_range(0..k_chunks);
            let g_new = chunk_gradient(j, state);
            // w <- prox_{gamma*lambda}(w - gamma * (g_new - g_old + avg))
            for tt in 0..t {
                let thr = gamma * lambdas[tt];
                for row in 0..d {
                    let step = g_new[(row, tt)] - memory[j][(row, tt)] + avg[(row, tt)];
                    let x = state.w[(row, tt)] - gamma * step;
                    state.w[(row, tt)] = if x > thr {
                        x - thr
                    } else if x < -thr {
                        x + thr
                    } else {
                        0.0
                    };
                }
            }
            let delta = &g_new - &memory[j];
            avg.scaled_add(1.0 / k_chunks as f64, &delta);
            memory[j] = g_new;
        }
        state.epochs += 1;
        // exact bias centering over kept rows
        let mut sums = vec![0.0f64; t];
        for c in 0..k_chunks {
            let (start, v) = &blocks[c];
            let p = v.dot(&state.w);
            for r in 0..v.nrows() {
                for tt in 0..t {
                    if data.kept(start + r, tt) {
                        sums[tt] += data.y[(start + r, tt)] - p[(r, tt)];
                    }
                }
            }
        }
        for tt in 0..t {
            state.b[tt] = sums[tt] / m_t[tt] as f64;
        }

        let mut dmax = 0.0f64;
        for (a, pa) in state.w.iter().zip(w_prev.iter()) {
            dmax = dmax.max((a - pa).abs());
        }
        for (bn, bo) in state.b.iter().zip(b_prev.iter()) {
            dmax = dmax.max((bn - bo).abs());
        }
        if dmax < opts.tol {
            let kkt = kkt_residuals(state);
            let all_ok = kkt.iter().all(|&r| r <= opts.kkt_tol);
            outcome.kkt = kkt;
            if all_ok {
                outcome.converged = vec![true; t];
                return Ok(outcome);
            }
        }
    }
    outcome.kkt = kkt_residuals(state);
    for (tt, flag) in outcome.converged.iter_mut().enumerate() {
        *flag = outcome.kkt[tt] <= opts.kkt_tol;
    }
    Ok(outcome)
}

/// Mean squared error (with the 1/2 convention) of the chunk's current
/// parameters over `rows`, per target; excluded rows are dropped.
fn range_mse(data: &ChunkData, w: &Array2<f64>, b: &Array1<f64>, rows: std::ops::Range<usize>, batch: usize) -> Vec<f64> {
    let t = data.t();
    let mut sums = vec![0.0f64; t];
    let mut counts = vec![0usize; t];
    for (start, v) in dense_blocks(data.masks, rows, batch) {
        let p = v.dot(w);
        for r in 0..v.nrows() {
            for tt in 0..t {
                if data.kept(start + r, tt) {
                    let e = p[(r, tt)] + b[tt] - data.y[(start + r, tt)];
                    sums[tt] += e * e;
                    counts[tt] += 1;
                }
            }
        }
    }
    (0..t).map(|tt| if counts[tt] == 0 { f64::NAN } else { 0.5 * sums[tt] / counts[tt] as f64 }).collect()
}

/// Smallest lambda whose solution is all-zero for each chunk target, from
/// the KKT bound |(2/M) X^T (y - ybar)|_inf evaluated over kept train rows.
fn auto_lambda_max(data: &ChunkData, rows: std::ops::Range<usize>) -> Vec<f64> {
    let t = data.t();
    let d = data.masks.d;
    let mut m_t = vec![0usize; t];
    let mut ybar = vec![0.0f64; t];
    for i in rows.clone() {
        for tt in 0..t {
            if data.kept(i, tt) {
                m_t[tt] += 1;
                ybar[tt] += data.y[(i, tt)];
            }
        }
    }
    for tt in 0..t {
        ybar[tt] /= (m_t[tt].max(1)) as f64;
    }
    let mut corr = vec![0.0f64; d * t];
    for i in rows {
        for j in data.masks.row_indices(i) {
            for tt in 0..t {
                if data.kept(i, tt) {
                    corr[j * t + tt] += data.y[(i, tt)] - ybar[tt];
                }
            }
        }
    }
    (0..t)
        .map(|tt| {
            let mut inf = 0.0f64;
            for j in 0..d {
                inf = inf.max(corr[j * t + tt].abs());
            }
            (2.0 * inf / m_t[tt].max(1) as f64).max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// Fits every target at a fixed per-target lambda over `fit_rows` (no path,
/// no selection). `lambdas` has one entry per target or a single shared
/// value. Used directly by tests and solver checks; path fitting builds on
/// the same machinery.
pub fn fit_lasso_at(
    masks: &MaskMatrix,
    outputs: &OutputMatrix,
    fit_rows: std::ops::Range<usize>,
    lambdas: &[f64],
    opts: &LassoOptions,
) -> Result<Vec<(Datamodel, FitReport)>> {
    check_shapes(masks, outputs, fit_rows.end)?;
    let n = outputs.n;
    let lam_for = |j: usize| if lambdas.len() == 1 { lambdas[0] } else { lambdas[j] };
    if lambdas.len() != 1 && lambdas.len() != n {
        return Err(Error::InvalidParam("need one lambda or one per target".into()));
    }
    let chunks = target_chunks(n, opts.target_chunk);
    let results = parallel::map_indexed(chunks.len(), |ci| {
        let targets = chunks[ci].clone();
        let data = chunk_data(masks, outputs, targets.clone());
        let t = data.t();
        let mut rng = row_rng(opts.seed, 0xA55A ^ ci as u64);
        let mut state = SagaState {
            w: Array2::zeros((masks.d, t)),
            b: Array1::zeros(t),
            epochs: 0,
        };
        let lams: Vec<f64> = targets.clone().map(lam_for).collect();
        let outcome = saga_fit(&data, fit_rows.clone(), &lams, &mut state, opts, &mut rng)?;
        let train_mse = range_mse(&data, &state.w, &state.b, fit_rows.clone(), opts.batch);
        let mut out = Vec::with_capacity(t);
        for (local, j) in targets.enumerate() {
            let theta = state.w.slice(s![.., local]).to_owned();
            let sparsity = theta.iter().filter(|&&x| x != 0.0).count();
            out.push((
                Datamodel {
                    theta,
                    bias: state.b[local],
                    alpha: masks.alpha,
                    lambda: lams[local],
                    target_id: j as u64,
                    output_fn: outputs.output_fn,
                    trainer_id: outputs.trainer_id.clone(),
                },
                FitReport {
                    target_id: j as u64,
                    val_mse_path: Vec::new(),
                    chosen_lambda: lams[local],
                    train_mse: train_mse[local],
                    heldout_mse: f64::NAN,
                    sparsity,
                    epochs: state.epochs,
                    converged: outcome.converged[local],
                    kkt_residual: outcome.kkt[local],
                },
            ));
        }
        Ok::<_, Error>(out)
    });
    flatten(results, n)
}

/// Full path fit: walk the regularization path on the train rows (warm
/// starts), select each target's lambda on the validation rows, refit on
/// train+validation, and report test MSE on the held-out test rows.
pub fn fit_lasso_multi(
    masks: &MaskMatrix,
    outputs: &OutputMatrix,
    split: SplitSpec,
    opts: &LassoOptions,
) -> Result<Vec<(Datamodel, FitReport)>> {
    if split.total() != masks.m {
        return Err(Error::Shape(format!(
            "split covers {} rows but masks have {}",
            split.total(),
            masks.m
        )));
    }
    check_shapes(masks, outputs, masks.m)?;
    if outputs.n == 0 {
        return Err(Error::InvalidParam("no target columns".into()));
    }
    let n = outputs.n;
    let chunks = target_chunks(n, opts.target_chunk);
    let results = parallel::map_indexed(chunks.len(), |ci| {
        let targets = chunks[ci].clone();
        let data = chunk_data(masks, outputs, targets.clone());
        let t = data.t();
        let mut rng = row_rng(opts.seed, 0x1A55 ^ ci as u64);

        // per-target descending lambda grids
        let grids: Vec<Vec<f64>> = match &opts.path {
            Some(p) => {
                let shared = p.lambdas();
                (0..t).map(|_| shared.clone()).collect()
            }
            None => auto_lambda_max(&data, split.train_range())
                .into_iter()
                .map(|lmax| {
                    RegularizationPath::new(lmax, opts.path_len)
                        .expect("positive lambda_max")
                        .lambdas()
                })
                .collect(),
        };
        let path_len = grids[0].len();

        let mut state = SagaState { w: Array2::zeros((masks.d, t)), b: Array1::zeros(t), epochs: 0 };
        let mut val_paths: Vec<Vec<(f64, f64)>> = vec![Vec::with_capacity(path_len); t];
        for p in 0..path_len {
            let lams: Vec<f64> = (0..t).map(|tt| grids[tt][p]).collect();
            saga_fit(&data, split.train_range(), &lams, &mut state, opts, &mut rng)?;
            let val = range_mse(&data, &state.w, &state.b, split.val_range(), opts.batch);
            for tt in 0..t {
                val_paths[tt].push((lams[tt], val[tt]));
            }
        }
        let path_epochs = state.epochs;

        // choose per-target lambda minimizing validation MSE
        let chosen: Vec<f64> = val_paths
            .iter()
            .map(|path| {
                path.iter()
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .map(|&(lam, _)| lam)
                    .unwrap()
            })
            .collect();

        // refit once on train + validation rows, warm-started from the end
        // of the path (the objective is convex, so the start only affects
        // time to convergence)
        let refit_rows = 0..split.train + split.val;
        let mut final_state =
            SagaState { w: state.w.clone(), b: state.b.clone(), epochs: 0 };
        let outcome = saga_fit(&data, refit_rows.clone(), &chosen, &mut final_state, opts, &mut rng)?;
        let train_mse = range_mse(&data, &final_state.w, &final_state.b, refit_rows, opts.batch);
        let test_mse = range_mse(&data, &final_state.w, &final_state.b, split.test_range(), opts.batch);

        let mut out = Vec::with_capacity(t);
        for (local, j) in targets.enumerate() {
            let theta = final_state.w.slice(s![.., local]).to_owned();
            let sparsity = theta.iter().filter(|&&x| x != 0.0).count();
            out.push((
                Datamodel {
                    theta,
                    bias: final_state.b[local],
                    alpha: masks.alpha,
                    lambda: chosen[local],
                    target_id: j as u64,
                    output_fn: outputs.output_fn,
                    trainer_id: outputs.trainer_id.clone(),
                },
                FitReport {
                    target_id: j as u64,
                    val_mse_path: val_paths[local].clone(),
                    chosen_lambda: chosen[local],
                    train_mse: train_mse[local],
                    heldout_mse: test_mse[local],
                    sparsity,
                    epochs: path_epochs + final_state.epochs,
                    converged: outcome.converged[local],
                    kkt_residual: outcome.kkt[local],
                },
            ));
        }
        Ok::<_, Error>(out)
    });
    flatten(results, n)
}

fn check_shapes(masks: &MaskMatrix, outputs: &OutputMatrix, need_rows: usize) -> Result<()> {
    if masks.m != outputs.m {
        return Err(Error::Shape(format!("masks m={} vs outputs m={}", masks.m, outputs.m)));
    }
    if need_rows > masks.m {
        return Err(Error::Shape(format!("fit range needs {need_rows} rows, have {}", masks.m)));
    }
    Ok(())
}

fn target_chunks(n: usize, width: usize) -> Vec<std::ops::Range<usize>> {
    let width = width.max(1);
    (0..n.div_ceil(width)).map(|c| (c * width)..((c + 1) * width).min(n)).collect()
}

fn chunk_data<'a>(masks: &'a MaskMatrix, outputs: &OutputMatrix, targets: std::ops::Range<usize>) -> ChunkData<'a> {
    let t = targets.len();
    let mut y = Array2::<f64>::zeros((masks.m, t));
    let mut keep = vec![true; masks.m * t];
    for (local, j) in targets.clone().enumerate() {
        for i in 0..masks.m {
            y[(i, local)] = outputs.value(i, j);
            keep[i * t + local] = !outputs.is_excluded(i, j);
        }
    }
    ChunkData { masks, y, keep, targets }
}

fn flatten(
    results: Vec<Result<Vec<(Datamodel, FitReport)>>>,
    n: usize,
) -> Result<Vec<(Datamodel, FitReport)>> {
    let mut out = Vec::with_capacity(n);
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
