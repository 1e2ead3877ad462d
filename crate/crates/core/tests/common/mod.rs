//! Independent reference implementations used by the integration and
//! acceptance tests. Everything here is written as plain nested loops over
//! scalars and shares no code with the library kernels.

#![allow(dead_code)]

use convsent::embeddings::{EmbeddingTable, InputMatrix};
use convsent::ensemble::Candidate;
use convsent::label::Label;
use convsent::model::{Hyperparams, Model};
use ndarray::{Array1, Array2, Array3};
use rand::Rng;

pub const LOG_EPS: f64 = 1e-12;

/// `out[k][j] = b[k] + sum_{a, r} w[k][a][r] * x[r][j + a]`.
pub fn conv_oracle(w: &Array3<f64>, b: &Array1<f64>, x: &Array2<f64>) -> Vec<Vec<f64>> {
    let (f, m, d) = w.dim();
    let maxl = x.ncols();
    let mut out = vec![vec![0.0; maxl + 1 - m]; f];
    for k in 0..f {
        for j in 0..=maxl - m {
            let mut s = b[k];
            for a in 0..m {
                for r in 0..d {
                    s += w[[k, a, r]] * x[[r, j + a]];
                }
            }
            out[k][j] = s;
        }
    }
    out
}

/// `out[i] = b[i] + sum_j w[i][j] * x[j]`.
pub fn dense_oracle(w: &Array2<f64>, b: &Array1<f64>, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = w.dim();
    let mut out = vec![0.0; rows];
    for i in 0..rows {
        let mut s = b[i];
        for j in 0..cols {
            s += w[[i, j]] * x[j];
        }
        out[i] = s;
    }
    out
}

/// `p_i = 1 / sum_j exp(z_j - z_i)`, algebraically equal to the usual
/// normalized exponential but computed along a different route.
pub fn softmax_oracle(z: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; z.len()];
    for i in 0..z.len() {
        let mut s = 0.0;
        for j in 0..z.len() {
            s += (z[j] - z[i]).exp();
        }
        p[i] = 1.0 / s;
    }
    p
}

pub fn loss_oracle(p: &[f64], gold: usize) -> f64 {
    -(p[gold] + LOG_EPS).ln()
}

pub fn relu_oracle(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Inference-mode forward pass of the whole network.
pub fn network_oracle(model: &Model, x: &Array2<f64>) -> Vec<f64> {
    let p = &model.params;
    let mut pooled = Vec::new();
    for bank in &p.banks {
        for row in conv_oracle(&bank.weights, &bank.biases, x) {
            let mut best = 0.0;
            for v in row {
                let r = relu_oracle(v);
                if r > best {
                    best = r;
                }
            }
            pooled.push(best);
        }
    }
    let hidden: Vec<f64> = dense_oracle(&p.fc.weights, &p.fc.biases, &pooled)
        .into_iter()
        .map(relu_oracle)
        .collect();
    softmax_oracle(&dense_oracle(&p.out.weights, &p.out.biases, &hidden))
}

pub fn network_loss_oracle(model: &Model, x: &Array2<f64>, gold: usize) -> f64 {
    loss_oracle(&network_oracle(model, x), gold)
}

/// Smallest distance of any activation-function or pooling decision point
/// from its switching boundary. Finite differences are only meaningful when
/// this is comfortably larger than the perturbation.
pub fn kink_margin(model: &Model, x: &Array2<f64>) -> f64 {
    let p = &model.params;
    let mut margin = f64::INFINITY;
    let mut pooled = Vec::new();
    for bank in &p.banks {
        for row in conv_oracle(&bank.weights, &bank.biases, x) {
            for &v in &row {
                margin = margin.min(v.abs());
            }
            let mut sorted: Vec<f64> = row.iter().map(|&v| relu_oracle(v)).collect();
            sorted.sort_by(|a, b| b.total_cmp(a));
            if sorted.len() > 1 && sorted[0] > 0.0 {
                margin = margin.min(sorted[0] - sorted[1]);
            }
            pooled.push(sorted[0]);
        }
    }
    for v in dense_oracle(&p.fc.weights, &p.fc.biases, &pooled) {
        margin = margin.min(v.abs());
    }
    margin
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// The tiny network used for gradient checks.
pub fn tiny_hyper() -> Hyperparams {
    Hyperparams {
        dim: 2,
        maxl: 4,
        filter_sizes: vec![1, 2],
        feature_maps: 1,
        dropout_p: 0.0,
        fc_units: 2,
        classes: 3,
    }
}

/// A model with every parameter, biases included, uniform in `[-1, 1]`.
pub fn random_model<R: Rng>(hyper: &Hyperparams, rng: &mut R) -> Model {
    let mut model = Model::init(hyper.clone(), rng.random()).unwrap();
    for tensor in model.params.tensors_mut() {
        for v in tensor.iter_mut() {
            *v = rng.random_range(-1.0..=1.0);
        }
    }
    model
}

pub fn random_input<R: Rng>(dim: usize, maxl: usize, rng: &mut R) -> InputMatrix {
    let values = Array2::from_shape_fn((dim, maxl), |_| rng.random_range(-1.0..=1.0));
    InputMatrix::new(values, maxl).unwrap()
}

/// Scalar Nadam recurrence with the default warm-up schedule.
pub struct ScalarNadam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule_decay: f64,
}

impl Default for ScalarNadam {
    fn default() -> Self {
        ScalarNadam {
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule_decay: 0.004,
        }
    }
}

impl ScalarNadam {
    /// Parameter values after each gradient in `grads`.
    pub fn trace(&self, theta0: f64, grads: &[f64]) -> Vec<f64> {
        let mut theta = theta0;
        let mut m = 0.0;
        let mut v = 0.0;
        let mut prod = 1.0;
        let mut out = Vec::new();
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as f64;
            let mu = self.beta1 * (1.0 - 0.5 * 0.96f64.powf(t * self.schedule_decay));
            let mu_next = self.beta1 * (1.0 - 0.5 * 0.96f64.powf((t + 1.0) * self.schedule_decay));
            prod *= mu;
            let g_hat = g / (1.0 - prod);
            m = self.beta1 * m + (1.0 - self.beta1) * g;
            let m_hat = m / (1.0 - prod * mu_next);
            v = self.beta2 * v + (1.0 - self.beta2) * g * g;
            let v_hat = v / (1.0 - self.beta2.powf(t));
            let m_bar = (1.0 - mu) * g_hat + mu_next * m_hat;
            theta -= self.lr * m_bar / (v_hat.sqrt() + self.eps);
            out.push(theta);
        }
        out
    }
}

/// Textbook Adam, for the reduction check.
pub fn adam_trace(
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    theta0: f64,
    grads: &[f64],
) -> Vec<f64> {
    let mut theta = theta0;
    let mut m = 0.0;
    let mut v = 0.0;
    let mut out = Vec::new();
    for (i, &g) in grads.iter().enumerate() {
        let t = (i + 1) as i32;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        let m_hat = m / (1.0 - beta1.powi(t));
        let v_hat = v / (1.0 - beta2.powi(t));
        theta -= lr * m_hat / (v_hat.sqrt() + eps);
        out.push(theta);
    }
    out
}

/// Argmax with the library's documented tie order: neutral first when tied
/// for the maximum, then negative, then positive.
pub fn argmax_oracle(p: &[f64]) -> Label {
    let max = p[0].max(p[1]).max(p[2]);
    if p[1] == max {
        Label::Neutral
    } else if p[0] == max {
        Label::Negative
    } else {
        Label::Positive
    }
}

/// Count votes; among labels tied for the most votes take the one with the
/// largest summed probability; remaining ties go to negative, then neutral,
/// then positive.
pub fn vote_oracle(labels: &[Label], probs: &[[f64; 3]]) -> (Label, [u32; 3]) {
    let mut votes = [0u32; 3];
    for l in labels {
        votes[l.index()] += 1;
    }
    let top = votes[0].max(votes[1]).max(votes[2]);
    let mut mass = [0.0; 3];
    for p in probs {
        for c in 0..3 {
            mass[c] += p[c];
        }
    }
    let mut winner: Option<usize> = None;
    for c in 0..3 {
        if votes[c] != top {
            continue;
        }
        match winner {
            None => winner = Some(c),
            Some(w) if mass[c] > mass[w] => winner = Some(c),
            _ => {}
        }
    }
    (Label::from_index(winner.unwrap()).unwrap(), votes)
}

pub fn agreement_oracle(a: &[Label], b: &[Label]) -> f64 {
    let mut same = 0;
    for i in 0..a.len() {
        if a[i] == b[i] {
            same += 1;
        }
    }
    same as f64 / a.len() as f64
}

/// Greedy selection written out directly: repeatedly pick the not yet
/// visited candidate with the highest recall (lowest seed on ties) and keep
/// it when it agrees with every kept member at most `threshold`. Returns the
/// seeds of all diverse candidates in visiting order.
pub fn greedy_oracle(pool: &[Candidate], threshold: f64) -> Vec<u64> {
    let mut visited = vec![false; pool.len()];
    let mut kept: Vec<usize> = Vec::new();
    for _ in 0..pool.len() {
        let mut best: Option<usize> = None;
        for i in 0..pool.len() {
            if visited[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let better = pool[i].dev_recall > pool[b].dev_recall
                        || (pool[i].dev_recall == pool[b].dev_recall
                            && pool[i].init_seed < pool[b].init_seed);
                    Some(if better { i } else { b })
                }
            };
        }
        let i = best.unwrap();
        visited[i] = true;
        let mut ok = true;
        for &j in &kept {
            if agreement_oracle(&pool[i].dev_predictions, &pool[j].dev_predictions) > threshold {
                ok = false;
            }
        }
        if ok {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| pool[i].init_seed).collect()
}

/// Metric values computed straight from a 3x3 count matrix (rows gold,
/// columns predicted).
pub struct MetricOracle {
    pub recall: [f64; 3],
    pub precision: [f64; 3],
    pub f1: [f64; 3],
    pub avg_recall: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub f1_pn: f64,
}

#[allow(clippy::needless_range_loop)]
pub fn metric_oracle(c: &[[u64; 3]; 3]) -> MetricOracle {
    let mut recall = [0.0; 3];
    let mut precision = [0.0; 3];
    let mut f1 = [0.0; 3];
    let mut total = 0u64;
    let mut trace = 0u64;
    for i in 0..3 {
        let mut row = 0u64;
        let mut col = 0u64;
        for j in 0..3 {
            row += c[i][j];
            col += c[j][i];
            total += c[i][j];
        }
        trace += c[i][i];
        recall[i] = if row == 0 {
            0.0
        } else {
            c[i][i] as f64 / row as f64
        };
        precision[i] = if col == 0 {
            0.0
        } else {
            c[i][i] as f64 / col as f64
        };
        let s = precision[i] + recall[i];
        f1[i] = if s == 0.0 {
            0.0
        } else {
            2.0 * precision[i] * recall[i] / s
        };
    }
    MetricOracle {
        recall,
        precision,
        f1,
        avg_recall: (recall[0] + recall[1] + recall[2]) / 3.0,
        accuracy: trace as f64 / total as f64,
        macro_f1: (f1[0] + f1[1] + f1[2]) / 3.0,
        f1_pn: (f1[0] + f1[2]) / 2.0,
    }
}

/// Gold and predicted label lists realizing a count matrix.
#[allow(clippy::needless_range_loop)]
pub fn labels_from_counts(c: &[[u64; 3]; 3]) -> (Vec<Label>, Vec<Label>) {
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            for _ in 0..c[i][j] {
                gold.push(Label::from_index(i).unwrap());
                pred.push(Label::from_index(j).unwrap());
            }
        }
    }
    (gold, pred)
}

/// A random candidate pool with correlated predictions, tied recalls, and a
/// matching `(k, threshold)`.
pub fn random_pool<R: Rng>(rng: &mut R) -> (Vec<Candidate>, usize, f64) {
    let n = rng.random_range(1..=20);
    let dev = rng.random_range(1..=50);
    let mut seeds: Vec<u64> = Vec::new();
    while seeds.len() < n {
        let s = rng.random_range(0..100);
        if !seeds.contains(&s) {
            seeds.push(s);
        }
    }
    let base: Vec<Label> = (0..dev).map(|_| random_label(rng)).collect();
    let pool = seeds
        .into_iter()
        .map(|seed| {
            let flip = rng.random_range(0.0..=0.5);
            let preds = base
                .iter()
                .map(|&l| {
                    if rng.random_bool(flip) {
                        random_label(rng)
                    } else {
                        l
                    }
                })
                .collect();
            Candidate {
                model_path: format!("candidate-{seed}.svt").into(),
                init_seed: seed,
                dev_recall: rng.random_range(0..8) as f64 / 8.0,
                dev_predictions: preds,
            }
        })
        .collect();
    let threshold = match rng.random_range(0..4) {
        0 => 1.0,
        1 => 0.95,
        2 => rng.random_range(0..=10) as f64 / 10.0,
        _ => rng.random_range(0.0..=1.0),
    };
    (pool, rng.random_range(1..=n), threshold)
}

pub fn random_label<R: Rng>(rng: &mut R) -> Label {
    Label::from_index(rng.random_range(0..3)).unwrap()
}

/// Compares `select_members` with [`greedy_oracle`] and checks the emitted
/// members pairwise.
pub fn check_selection(pool: &[Candidate], k: usize, threshold: f64) -> Result<(), String> {
    let diverse = greedy_oracle(pool, threshold);
    let result = convsent::ensemble::select_members(pool, k, threshold);
    if diverse.len() < k {
        return match result {
            Err(convsent::Error::InsufficientCandidates { wanted, selectable })
                if wanted == k && selectable == diverse.len() =>
            {
                Ok(())
            }
            other => Err(format!(
                "expected shortfall {} < {k}, got {other:?}",
                diverse.len()
            )),
        };
    }
    let manifest = result.map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = manifest.members.iter().map(|m| m.init_seed).collect();
    if seeds != diverse[..k] {
        return Err(format!("selected {seeds:?}, oracle {:?}", &diverse[..k]));
    }
    let preds = |seed: u64| {
        &pool
            .iter()
            .find(|c| c.init_seed == seed)
            .unwrap()
            .dev_predictions
    };
    for (i, &a) in seeds.iter().enumerate() {
        for &b in &seeds[..i] {
            if agreement_oracle(preds(a), preds(b)) > threshold {
                return Err(format!("members {a} and {b} agree above {threshold}"));
            }
        }
    }
    Ok(())
}

/// Member probabilities on a 1/1024 grid, so every sum is exact, plus the
/// matching argmax labels.
pub fn random_votes<R: Rng>(rng: &mut R) -> (Vec<Label>, Vec<[f64; 3]>) {
    let k = rng.random_range(1..=9);
    let grid = [1024u32, 4][rng.random_range(0..2)];
    let probs: Vec<[f64; 3]> = (0..k)
        .map(|_| {
            let a = rng.random_range(0..=grid);
            let b = rng.random_range(0..=grid - a);
            let c = grid - a - b;
            let s = grid as f64;
            [a as f64 / s, b as f64 / s, c as f64 / s]
        })
        .collect();
    let labels = probs.iter().map(|p| argmax_oracle(p)).collect();
    (labels, probs)
}

/// A random count matrix, sometimes with empty rows or columns.
pub fn random_counts<R: Rng>(rng: &mut R) -> [[u64; 3]; 3] {
    loop {
        let mut c = [[0u64; 3]; 3];
        let empty_row = rng.random_bool(0.2).then(|| rng.random_range(0..3));
        let empty_col = rng.random_bool(0.2).then(|| rng.random_range(0..3));
        for (i, row) in c.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if Some(i) != empty_row && Some(j) != empty_col {
                    *v = rng.random_range(0..20);
                }
            }
        }
        if c.iter().flatten().sum::<u64>() > 0 {
            return c;
        }
    }
}

/// Every metric of the library's confusion matrix against
/// [`metric_oracle`].
pub fn check_metrics(counts: &[[u64; 3]; 3], tol: f64) -> Result<(), String> {
    let (gold, pred) = labels_from_counts(counts);
    let cm = convsent::metrics::confusion(&gold, &pred).map_err(|e| e.to_string())?;
    if cm.counts != *counts {
        return Err(format!("counts {:?} vs {counts:?}", cm.counts));
    }
    let o = metric_oracle(counts);
    let mut pairs = vec![
        ("avg_recall", cm.avg_recall(), o.avg_recall),
        ("accuracy", cm.accuracy(), o.accuracy),
        ("macro_f1", cm.macro_f1(), o.macro_f1),
        ("f1_pn", cm.f1_pn(), o.f1_pn),
    ];
    for l in Label::ALL {
        let i = l.index();
        pairs.push(("recall", cm.recall(l), o.recall[i]));
        pairs.push(("precision", cm.precision(l), o.precision[i]));
        pairs.push(("f1", cm.f1(l), o.f1[i]));
    }
    for (name, got, want) in pairs {
        // Written so that a NaN fails.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let close = (got - want).abs() < tol;
        if !close || !(0.0..=1.0).contains(&got) {
            return Err(format!("{name}: {got} vs {want} for {counts:?}"));
        }
    }
    Ok(())
}

/// Synthetic separable corpus and a table covering its vocabulary.
pub fn synthetic_setup(
    n: usize,
    dim: usize,
    seed: u64,
) -> (Vec<convsent::LabeledExample>, EmbeddingTable) {
    use convsent::synthetic::{corpus_text, embedding_text, separable_corpus};
    let text = corpus_text(&separable_corpus(n, seed));
    let data = convsent::text::parse_dataset(text.lines()).unwrap();
    let table = EmbeddingTable::from_reader(embedding_text(dim, seed).as_bytes(), 0).unwrap();
    (data.examples, table)
}

/// Trains the desk network on 50 separable examples, evaluating training
/// accuracy after every epoch. Returns the accuracies.
pub fn capacity_run(max_epochs: usize) -> Vec<f64> {
    use convsent::train::{evaluate, Trainer};
    let desk = convsent::RunConfig::desk();
    let (train, table) = synthetic_setup(50, desk.hyper.dim, 5);
    let model = Model::init(desk.hyper.clone(), 1).unwrap();
    let mut trainer = Trainer::new(
        model,
        &table,
        &train,
        desk.train.clone(),
        desk.nadam.clone(),
    )
    .unwrap();
    let mut accuracies = Vec::new();
    for _ in 0..max_epochs {
        trainer.run_epoch().unwrap();
        let acc = evaluate(trainer.model(), &table, &train)
            .unwrap()
            .confusion
            .accuracy();
        accuracies.push(acc);
        if acc >= 0.98 {
            break;
        }
    }
    accuracies
}

/// Checks every parameter gradient of the tiny network on `instances`
/// random examples away from activation kinks, with central differences of
/// [`network_loss_oracle`] at step 1e-5 and dropout disabled. Returns the
/// worst relative error (floor 1e-6) and the number of instances checked.
pub fn network_gradient_check(instances: usize, seed: u64) -> (f64, usize) {
    use rand::SeedableRng;
    const H: f64 = 1e-5;
    let hyper = tiny_hyper();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < instances {
        let model = random_model(&hyper, &mut rng);
        let input = random_input(hyper.dim, hyper.maxl, &mut rng);
        let x = input.values().clone();
        if kink_margin(&model, &x) < 1e-3 {
            continue;
        }
        let gold = random_label(&mut rng);
        let (_, cache) = model.forward(&input, true, &mut rng).unwrap();
        let (loss, grads) = model.backward(&cache, gold).unwrap();
        assert!((loss - network_loss_oracle(&model, &x, gold.index())).abs() < 1e-12);

        let analytic: Vec<f64> = grads.tensors().concat();
        let base: Vec<Vec<f64>> = model.params.tensors().iter().map(|t| t.to_vec()).collect();
        let mut flat = 0;
        for (ti, tensor) in base.iter().enumerate() {
            for (vi, &v0) in tensor.iter().enumerate() {
                let loss_at = |v: f64| {
                    let mut probe = model.clone();
                    probe.params.tensors_mut()[ti][vi] = v;
                    network_loss_oracle(&probe, &x, gold.index())
                };
                let numeric = (loss_at(v0 + H) - loss_at(v0 - H)) / (2.0 * H);
                worst = worst.max(relative_error(analytic[flat], numeric, 1e-6));
                flat += 1;
            }
        }
        checked += 1;
    }
    (worst, checked)
}
