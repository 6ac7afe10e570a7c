//! Full-catalog softmax contrastive training of the embedding tables.
//!
//! For a case with symptom set `S` and target `t`, with `q = normalize(mean(E_S[s] for s in S))`
//! and `sim_d = cos(q, E_D[d])`, the loss is `-sim_t + log(sum_d exp(sim_d))`.

use serde::{Deserialize, Serialize};

use super::{RetrieverError, RetrieverModel};
use crate::knowledge::{CaseRecord, DiseaseDB};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            epochs: 200,
            learning_rate: 0.05,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RetrieverModel,
    /// Mean loss before training (index 0) and after each epoch.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least the initial loss")
    }
}

/// The contrastive objective over a fixed case set, as a function of a flat
/// parameter vector laid out as symptom rows then disease rows.
#[derive(Debug, Clone)]
pub struct ContrastiveObjective {
    dim: usize,
    n_symptoms: usize,
    n_diseases: usize,
    queries: Vec<(Vec<usize>, usize)>,
}

impl ContrastiveObjective {
    pub fn new(db: &DiseaseDB, cases: &[CaseRecord], dim: usize) -> Result<Self, RetrieverError> {
        if cases.is_empty() {
            return Err(RetrieverError::NoCases);
        }
        if db.symptom_vocab().is_empty() {
            return Err(RetrieverError::EmptyVocab);
        }
        let mut queries = Vec::with_capacity(cases.len());
        for c in cases {
            let target = db
                .index_of(&c.target)
                .ok_or_else(|| RetrieverError::UnknownTarget(c.target.clone()))?;
            let members: Vec<usize> = c
                .explicit
                .iter()
                .chain(&c.implicit)
                .filter_map(|s| db.symptom_vocab().binary_search(s).ok())
                .collect();
            if members.is_empty() {
                return Err(RetrieverError::EmptyQuery);
            }
            queries.push((members, target));
        }
        Ok(Self {
            dim,
            n_symptoms: db.symptom_vocab().len(),
            n_diseases: db.len(),
            queries,
        })
    }

    pub fn n_params(&self) -> usize {
        (self.n_symptoms + self.n_diseases) * self.dim
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        self.evaluate(params, false).0
    }

    /// Mean loss and its analytic gradient.
    pub fn loss_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let (l, g) = self.evaluate(params, true);
        (l, g.expect("gradient requested"))
    }

    fn evaluate(&self, params: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
        assert_eq!(params.len(), self.n_params(), "parameter vector length");
        let dim = self.dim;
        let (sym, dis) = params.split_at(self.n_symptoms * dim);

        // Disease unit vectors and norms are shared by all queries.
        let mut dis_norm = vec![0.0; self.n_diseases];
        let mut dis_unit = vec![0.0; self.n_diseases * dim];
        for j in 0..self.n_diseases {
            let row = &dis[j * dim..(j + 1) * dim];
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            dis_norm[j] = n;
            if n > 0.0 {
                for (u, x) in dis_unit[j * dim..(j + 1) * dim].iter_mut().zip(row) {
                    *u = x / n;
                }
            }
        }

        let mut grad = want_grad.then(|| vec![0.0; params.len()]);
        let mut total = 0.0;
        let inv_n = 1.0 / self.queries.len() as f64;
        let mut mean = vec![0.0; dim];
        let mut sims = vec![0.0; self.n_diseases];

        for (members, target) in &self.queries {
            mean.iter_mut().for_each(|m| *m = 0.0);
            for &i in members {
                for (m, x) in mean.iter_mut().zip(&sym[i * dim..(i + 1) * dim]) {
                    *m += x;
                }
            }
            let inv_m = 1.0 / members.len() as f64;
            mean.iter_mut().for_each(|m| *m *= inv_m);
            let mean_norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
            let q: Vec<f64> = mean.iter().map(|x| x / mean_norm).collect();

            for j in 0..self.n_diseases {
                sims[j] = q
                    .iter()
                    .zip(&dis_unit[j * dim..(j + 1) * dim])
                    .map(|(a, b)| a * b)
                    .sum();
            }
            let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = sims.iter().map(|s| (s - max).exp()).sum();
            let lse = max + z.ln();
            total += lse - sims[*target];

            let Some(grad) = grad.as_mut() else { continue };
            // dL/dsim_d = softmax_d - [d == target]
            let mut g_q = vec![0.0; dim];
            for j in 0..self.n_diseases {
                let mut g = (sims[j] - lse).exp();
                if j == *target {
                    g -= 1.0;
                }
                g *= inv_n;
                if g == 0.0 || dis_norm[j] == 0.0 {
                    continue;
                }
                let unit = &dis_unit[j * dim..(j + 1) * dim];
                // d cos / d v = (q - cos * v_hat) / |v|
                let gd = &mut grad[(self.n_symptoms + j) * dim..(self.n_symptoms + j + 1) * dim];
                for k in 0..dim {
                    gd[k] += g * (q[k] - sims[j] * unit[k]) / dis_norm[j];
                    g_q[k] += g * unit[k];
                }
            }
            // Back through q = mean / |mean| and the mean.
            let q_dot: f64 = q.iter().zip(&g_q).map(|(a, b)| a * b).sum();
            let scale = inv_m / mean_norm;
            for &i in members {
                let gs = &mut grad[i * dim..(i + 1) * dim];
                for k in 0..dim {
                    gs[k] += (g_q[k] - q_dot * q[k]) * scale;
                }
            }
        }
        (total * inv_n, grad)
    }
}

fn params_of(model: &RetrieverModel) -> Vec<f64> {
    model
        .symptom_table()
        .iter()
        .chain(model.disease_table())
        .map(|v| *v as f64)
        .collect()
}

/// Trains free symptom and disease embeddings by full-batch gradient descent
/// on the contrastive objective, starting from `RetrieverModel::init`.
pub fn train_retriever(
    db: &DiseaseDB,
    cases: &[CaseRecord],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, RetrieverError> {
    let init = RetrieverModel::init(db, cfg.dim, cfg.seed)?;
    let objective = ContrastiveObjective::new(db, cases, cfg.dim)?;
    if cfg.epochs == 0 {
        let loss = objective.loss(&params_of(&init));
        return Ok(TrainOutcome {
            model: init,
            losses: vec![loss],
        });
    }
    let mut params = params_of(&init);
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = objective.loss_and_grad(&params);
        if !loss.is_finite() {
            return Err(RetrieverError::NonFiniteLoss { epoch });
        }
        losses.push(loss);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
        }
        log::debug!("epoch {epoch}: loss {loss:.6}");
    }
    let final_loss = objective.loss(&params);
    if !final_loss.is_finite() {
        return Err(RetrieverError::NonFiniteLoss { epoch: cfg.epochs });
    }
    losses.push(final_loss);

    let split = db.symptom_vocab().len() * cfg.dim;
    let sym = params[..split].iter().map(|v| *v as f32).collect();
    let dis = params[split..].iter().map(|v| *v as f32).collect();
    Ok(TrainOutcome {
        model: RetrieverModel::from_parts(db, cfg.dim, sym, dis)?,
        losses,
    })
}
