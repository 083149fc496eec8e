use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::TrainConfig;
use super::loss::{
    pretrain_loss, projector, resolved, train_loss, LossParts, ProjectorConfig, RecordedLoss,
};
use super::optim::{Adam, DualState};
use crate::error::{Error, Result};
use crate::milp::{generate, Counterexample, GeneratorConfig, GeneratorResult, MilpStatus};
use crate::numcore::Mat;
use crate::property::{InputBox, RelationalProperty};
use crate::smile::SmileModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Train,
    Post,
}

/// One telemetry line. Pretraining logs per epoch, training per batch,
/// posttraining per generator call.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TelemetryRow {
    pub phase: Phase,
    pub step: usize,
    #[serde(rename = "L_acc")]
    pub l_acc: f64,
    #[serde(rename = "L_box")]
    pub l_box: f64,
    #[serde(rename = "L_prop")]
    pub l_prop: f64,
    #[serde(rename = "lambda_prop")]
    pub lambda_prop: f64,
    pub status: Option<MilpStatus>,
    pub gamma: Option<f64>,
    pub gamma_bar: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PhaseSummary {
    pub epochs: usize,
    pub steps: usize,
    pub final_loss: LossParts,
    pub lambda_trajectory: Vec<f64>,
    pub generator_calls: usize,
    pub gammas: Vec<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainReport {
    #[serde(skip)]
    pub model: SmileModel,
    /// Certified upper bound on the violation of any premise-satisfying pair.
    pub viol_bound: f64,
    pub final_status: Option<MilpStatus>,
    pub pretrain: PhaseSummary,
    pub train: PhaseSummary,
    pub post: PhaseSummary,
    #[serde(skip)]
    pub telemetry: Vec<TelemetryRow>,
}

impl TrainReport {
    pub fn certified(&self) -> bool {
        self.viol_bound == 0.0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn telemetry_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.telemetry {
            w.serialize(row)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }
}

/// A freshly initialized model for `cfg`, seeded from `cfg.seed`.
pub fn init_model(input_dim: usize, cfg: &TrainConfig) -> SmileModel {
    SmileModel::random(
        input_dim,
        &cfg.architecture,
        &mut ChaCha8Rng::seed_from_u64(cfg.seed),
    )
}

struct Clock {
    start: Instant,
    enabled: bool,
}

impl Clock {
    fn ms(&self) -> u64 {
        if self.enabled {
            self.start.elapsed().as_millis() as u64
        } else {
            0
        }
    }
}

fn batches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size).map(<[usize]>::to_vec).collect()
}

fn row(phase: Phase, step: usize, parts: &LossParts, lambda: f64, ms: u64) -> TelemetryRow {
    TelemetryRow {
        phase,
        step,
        l_acc: parts.acc,
        l_box: parts.box_,
        l_prop: parts.prop,
        lambda_prop: lambda,
        status: None,
        gamma: None,
        gamma_bar: None,
        wall_ms: ms,
    }
}

fn with_generator(mut r: TelemetryRow, res: &GeneratorResult) -> TelemetryRow {
    r.status = Some(res.status());
    r.gamma = res.counterexample.as_ref().map(|c| c.gamma);
    r.gamma_bar = Some(res.viol_bound());
    r
}

struct Run<'a> {
    model: SmileModel,
    x: &'a Mat,
    y: Mat,
    prop: &'a RelationalProperty,
    bx: &'a InputBox,
    cfg: &'a TrainConfig,
    rng: ChaCha8Rng,
    adam: Adam,
    clock: Clock,
    telemetry: Vec<TelemetryRow>,
}

impl Run<'_> {
    fn primal(&mut self, rec: &RecordedLoss) -> Result<()> {
        let g = rec.gradients()?;
        self.adam.step(&mut self.model, &g, None)
    }

    fn generator(&self, post: bool) -> GeneratorConfig {
        GeneratorConfig {
            t0: self.cfg.gen_t0,
            t_max: if post {
                self.cfg.post_t_max.unwrap_or(f64::INFINITY)
            } else {
                self.cfg.gen_t_max
            },
            to_optimality: false,
            pattern_tol: self.cfg.pattern_tol,
        }
    }

    fn pretrain(&mut self) -> Result<PhaseSummary> {
        let mut s = PhaseSummary::default();
        let (mut best, mut stale) = (f64::INFINITY, 0);
        for epoch in 0..self.cfg.pretrain_epochs {
            let mut mean = LossParts::default();
            let bs = batches(self.x.rows(), self.cfg.batch_size, &mut self.rng);
            for b in &bs {
                let (xb, yb) = (self.x.select_rows(b), self.y.select_rows(b));
                let rec = pretrain_loss(&self.model, &xb, &yb, self.cfg.lambda_box, self.cfg.loss)?;
                self.primal(&rec)?;
                let w = b.len() as f64 / self.x.rows() as f64;
                mean.acc += w * rec.parts.acc;
                mean.box_ += w * rec.parts.box_;
                mean.total += w * rec.parts.total;
                s.steps += 1;
            }
            s.epochs = epoch + 1;
            s.final_loss = mean;
            self.telemetry
                .push(row(Phase::Pretrain, epoch, &mean, 0.0, self.clock.ms()));
            log::debug!("pretrain epoch {epoch}: {mean:?}");
            if let Some(patience) = self.cfg.pretrain_patience {
                if mean.total < best {
                    best = mean.total;
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= patience {
                        break;
                    }
                }
            }
        }
        s.wall_ms = self.clock.ms();
        Ok(s)
    }

    fn train(&mut self) -> Result<PhaseSummary> {
        let mut s = PhaseSummary::default();
        let mut dual = DualState::default();
        let mut ce: Option<Counterexample> = None;
        let mut pending = Some(generate(&self.model, self.prop, self.bx, self.generator(false))?);
        for epoch in 0..self.cfg.train_epochs {
            let bs = batches(self.x.rows(), self.cfg.batch_size, &mut self.rng);
            for b in &bs {
                if pending.is_none()
                    && resolved(&self.model, ce.as_ref(), self.prop, self.cfg.resolved_tol)?
                {
                    pending = Some(generate(&self.model, self.prop, self.bx, self.generator(false))?);
                }
                let fresh = pending.take();
                if let Some(res) = &fresh {
                    log::debug!(
                        "train step {}: generator {:?} gamma {:?} bound {} nodes {}",
                        s.steps,
                        res.status(),
                        res.counterexample.as_ref().map(|c| c.gamma),
                        res.viol_bound(),
                        res.outcome.nodes
                    );
                    s.generator_calls += 1;
                    ce = res.counterexample.clone();
                    if let Some(c) = &ce {
                        s.gammas.push(c.gamma);
                    }
                }
                let (xb, yb) = (self.x.select_rows(b), self.y.select_rows(b));
                let rec = train_loss(
                    &self.model,
                    &xb,
                    &yb,
                    self.cfg.lambda_box,
                    dual.lambda,
                    ce.as_ref(),
                    self.prop,
                    self.cfg.loss,
                )?;
                self.primal(&rec)?;
                dual.step(rec.parts.prop, self.cfg.eta_dual);
                s.lambda_trajectory.push(dual.lambda);
                let mut r = row(Phase::Train, s.steps, &rec.parts, dual.lambda, self.clock.ms());
                if let Some(res) = &fresh {
                    r = with_generator(r, res);
                }
                self.telemetry.push(r);
                s.final_loss = rec.parts;
                s.steps += 1;
            }
            s.epochs = epoch + 1;
            log::debug!("train epoch {epoch}: {:?} lambda {}", s.final_loss, dual.lambda);
        }
        s.wall_ms = self.clock.ms();
        Ok(s)
    }

    fn post(&mut self) -> Result<(PhaseSummary, f64, Option<MilpStatus>)> {
        let mut s = PhaseSummary::default();
        let pcfg = ProjectorConfig {
            steps: self.cfg.projector_steps,
            lr: self.cfg.projector_lr,
            eta_dual: self.cfg.projector_eta_dual,
            tol: self.cfg.resolved_tol,
            margin: self.cfg.projector_margin,
        };
        let mut viol_bound = f64::INFINITY;
        let mut status = None;
        for iter in 0..=self.cfg.post_max_iters {
            let res = generate(&self.model, self.prop, self.bx, self.generator(true))?;
            s.generator_calls += 1;
            status = Some(res.status());
            log::debug!(
                "post iter {iter}: generator {:?} gamma {:?} bound {} nodes {} work {}",
                res.status(),
                res.counterexample.as_ref().map(|c| c.gamma),
                res.viol_bound(),
                res.outcome.nodes,
                res.outcome.work
            );
            let base = row(Phase::Post, iter, &LossParts::default(), 0.0, 0);
            if res.status() == MilpStatus::Infeasible {
                viol_bound = 0.0;
                let mut r = with_generator(base, &res);
                r.wall_ms = self.clock.ms();
                self.telemetry.push(r);
                break;
            }
            viol_bound = res.viol_bound();
            let Some(ce) = res.counterexample.clone() else {
                self.telemetry.push(with_generator(base, &res));
                break;
            };
            s.gammas.push(ce.gamma);
            if iter == self.cfg.post_max_iters {
                self.telemetry.push(with_generator(base, &res));
                break;
            }
            let st = projector(&mut self.model, &ce, self.prop, &pcfg)?;
            s.steps += st.steps;
            log::debug!("projector: {st:?}");
            s.lambda_trajectory.push(st.lambda);
            let parts = LossParts {
                acc: st.distance,
                box_: 0.0,
                prop: st.violation,
                total: st.distance + st.lambda * st.violation,
            };
            s.final_loss = parts;
            let r = row(Phase::Post, iter, &parts, st.lambda, self.clock.ms());
            self.telemetry.push(with_generator(r, &res));
        }
        s.epochs = s.generator_calls;
        s.wall_ms = self.clock.ms();
        Ok((s, viol_bound, status))
    }
}

/// Pretrains, trains against counterexamples, then projects until the
/// generator proves that no violating pair exists or iterations run out.
pub fn train(
    model: SmileModel,
    x: &Mat,
    y: &[f64],
    prop: &RelationalProperty,
    bx: &InputBox,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    prop.validate(bx)?;
    bx.validate_dim(model.input_dim())?;
    if x.rows() == 0 {
        return Err(Error::Data("empty training set".into()));
    }
    if y.len() != x.rows() || x.cols() != model.input_dim() {
        return Err(Error::dim(format!(
            "data is {}x{} with {} targets for a {}-input model",
            x.rows(),
            x.cols(),
            y.len(),
            model.input_dim()
        )));
    }
    let adam = Adam::new(&model, cfg.adam);
    let mut run = Run {
        model,
        x,
        y: Mat::new(y.len(), 1, y.to_vec())?,
        prop,
        bx,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        adam,
        clock: Clock {
            start: Instant::now(),
            enabled: cfg.record_wall_time,
        },
        telemetry: Vec::new(),
    };
    let pretrain = run.pretrain()?;
    let train = run.train()?;
    let (post, viol_bound, final_status) = run.post()?;
    let mut model = run.model;
    model.meta.input_box = Some(bx.clone());
    model.meta.viol_bound = Some(viol_bound);
    Ok(TrainReport {
        model,
        viol_bound,
        final_status,
        pretrain,
        train,
        post,
        telemetry: run.telemetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smile::{Architecture, LinearHead};
    use crate::training::config::LossKind;

    fn toy_data(n: usize) -> (Mat, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ys = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        (Mat::new(n, 1, xs).unwrap(), ys)
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            loss: LossKind::Mse,
            architecture: Architecture {
                backbone_hidden: vec![4],
                aux_hidden: None,
                latent_dim: 2,
            },
            pretrain_epochs: 3,
            train_epochs: 2,
            batch_size: 8,
            post_max_iters: 50,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn constant_head_certifies_immediately() {
        let cfg = TrainConfig {
            pretrain_epochs: 0,
            train_epochs: 0,
            ..small_cfg()
        };
        let m = init_model(1, &cfg);
        let model = SmileModel::new(
            m.backbone().clone(),
            m.aux_low().clone(),
            m.aux_up().clone(),
            LinearHead::new(vec![0.0; 2], 0.5).unwrap(),
        )
        .unwrap();
        let bx = InputBox::uniform(1, 0.0, 1.0).unwrap();
        let prop = RelationalProperty::robustness(&bx, 0.1, 0.01).unwrap();
        let (x, y) = toy_data(16);
        let rep = train(model, &x, &y, &prop, &bx, &cfg).unwrap();
        assert_eq!(rep.viol_bound, 0.0);
        assert_eq!(rep.post.generator_calls, 1);
        assert_eq!(rep.final_status, Some(MilpStatus::Infeasible));
    }

    #[test]
    fn small_run_is_deterministic_and_consistent() {
        let cfg = small_cfg();
        let bx = InputBox::uniform(1, 0.0, 1.0).unwrap();
        let prop = RelationalProperty::robustness(&bx, 0.1, 0.1).unwrap();
        let (x, y) = toy_data(32);
        let a = train(init_model(1, &cfg), &x, &y, &prop, &bx, &cfg).unwrap();
        let b = train(init_model(1, &cfg), &x, &y, &prop, &bx, &cfg).unwrap();
        assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
        assert_eq!(a.telemetry_csv().unwrap(), b.telemetry_csv().unwrap());
        assert!(a.train.lambda_trajectory.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(a.certified(), a.final_status == Some(MilpStatus::Infeasible));
        assert!(a.telemetry_csv().unwrap().starts_with(
            "phase,step,L_acc,L_box,L_prop,lambda_prop,status,gamma,gamma_bar,wall_ms\n"
        ));
    }

    #[test]
    fn posttraining_leaves_backbone_alone() {
        let cfg = TrainConfig {
            train_epochs: 0,
            pretrain_epochs: 2,
            ..small_cfg()
        };
        let bx = InputBox::uniform(1, 0.0, 1.0).unwrap();
        let prop = RelationalProperty::robustness(&bx, 0.1, 0.05).unwrap();
        let (x, y) = toy_data(32);
        let pre_only = TrainConfig {
            post_max_iters: 0,
            post_t_max: Some(1.0),
            ..cfg.clone()
        };
        let before = train(init_model(1, &cfg), &x, &y, &prop, &bx, &pre_only).unwrap();
        let after = train(init_model(1, &cfg), &x, &y, &prop, &bx, &cfg).unwrap();
        assert_eq!(before.model.backbone(), after.model.backbone());
    }

    #[test]
    fn rejects_empty_data() {
        let cfg = small_cfg();
        let bx = InputBox::uniform(1, 0.0, 1.0).unwrap();
        let prop = RelationalProperty::robustness(&bx, 0.1, 0.05).unwrap();
        let x = Mat::zeros(0, 1);
        assert!(matches!(
            train(init_model(1, &cfg), &x, &[], &prop, &bx, &cfg),
            Err(Error::Data(_))
        ));
    }
}
