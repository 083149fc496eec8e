use super::config::AdamConfig;
use crate::error::{Error, Result};
use crate::numcore::{Gradients, Mat, ParamId};
use crate::smile::{Component, SmileModel};

/// Adam with bias correction; optionally restricted to some components.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    pub fn new(model: &SmileModel, cfg: AdamConfig) -> Self {
        let zeros: Vec<Mat> = model
            .params()
            .iter()
            .map(|(_, p)| Mat::zeros(p.rows(), p.cols()))
            .collect();
        Adam {
            cfg,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One descent step. Parameters outside `only` keep their values exactly.
    pub fn step(
        &mut self,
        model: &mut SmileModel,
        grads: &Gradients,
        only: Option<&[Component]>,
    ) -> Result<()> {
        check_finite(grads)?;
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for (i, (comp, p)) in model.params_mut().into_iter().enumerate() {
            if only.is_some_and(|o| !o.contains(&comp)) {
                continue;
            }
            let Some(g) = grads.get(ParamId(i)) else {
                continue;
            };
            let (m, v) = (self.m[i].as_mut_slice(), self.v[i].as_mut_slice());
            for (k, w) in p.as_mut_slice().iter_mut().enumerate() {
                let gk = g.as_slice()[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
                *w -= c.lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

fn check_finite(grads: &Gradients) -> Result<()> {
    if grads.all_finite() {
        return Ok(());
    }
    let bad: Vec<String> = grads
        .iter()
        .filter(|(_, g)| !g.is_finite())
        .map(|(id, _)| format!("#{}", id.0))
        .collect();
    Err(Error::TrainingAbort(format!(
        "non-finite gradient in parameters {}",
        bad.join(", ")
    )))
}

/// Plain gradient descent step `θ ← θ − lr · ∇θ`, restricted like [`Adam::step`].
pub fn gradient_step(
    model: &mut SmileModel,
    grads: &Gradients,
    lr: f64,
    only: Option<&[Component]>,
) -> Result<()> {
    check_finite(grads)?;
    for (i, (comp, p)) in model.params_mut().into_iter().enumerate() {
        if only.is_some_and(|o| !o.contains(&comp)) {
            continue;
        }
        if let Some(g) = grads.get(ParamId(i)) {
            for (w, gk) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *w -= lr * gk;
            }
        }
    }
    Ok(())
}

/// Lagrange multiplier of the property term.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DualState {
    pub lambda: f64,
}

impl DualState {
    pub fn step(&mut self, l_prop: f64, eta: f64) {
        self.lambda = dual_step(self.lambda, l_prop, eta);
    }
}

/// Gradient ascent on the multiplier: `λ + η · L_prop`.
pub fn dual_step(lambda: f64, l_prop: f64, eta: f64) -> f64 {
    debug_assert!(l_prop >= 0.0, "property loss must be nonnegative");
    lambda + eta * l_prop.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tape;
    use crate::smile::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_model() -> SmileModel {
        let arch = Architecture {
            backbone_hidden: vec![3],
            aux_hidden: None,
            latent_dim: 2,
        };
        SmileModel::random(2, &arch, &mut ChaCha8Rng::seed_from_u64(3))
    }

    /// `Σ ‖θ − target‖²` over all parameters.
    fn bowl(model: &SmileModel, target: &SmileModel) -> (f64, Gradients) {
        let mut tape = Tape::new();
        let params = model.register(&mut tape);
        let mut terms = Vec::new();
        for (i, (_, t)) in target.params().iter().enumerate() {
            terms.push(tape.sq_dist(params.node(ParamId(i)), t).unwrap());
        }
        let mut total = terms[0];
        for t in &terms[1..] {
            total = tape.add(total, *t).unwrap();
        }
        (tape.scalar(total), tape.gradient(total, 1.0).unwrap())
    }

    #[test]
    fn dual_arithmetic() {
        assert_eq!(dual_step(0.0, 2.0, 0.1), 0.2);
        assert_eq!(dual_step(0.7, 0.0, 0.1), 0.7);
        let mut d = DualState::default();
        let mut prev = 0.0;
        for l in [0.0, 1.0, 0.5, 0.0, 3.0] {
            d.step(l, 0.1);
            assert!(d.lambda >= prev);
            prev = d.lambda;
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut model = small_model();
        let target = model.clone();
        let (_, g) = bowl(&model, &target);
        Adam::new(&model, AdamConfig::default())
            .step(&mut model, &g, None)
            .unwrap();
        assert_eq!(model, target);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut model = small_model();
        let target = SmileModel::random(
            2,
            &Architecture {
                backbone_hidden: vec![3],
                aux_hidden: None,
                latent_dim: 2,
            },
            &mut ChaCha8Rng::seed_from_u64(99),
        );
        let mut adam = Adam::new(&model, AdamConfig::with_lr(0.05));
        let (start, _) = bowl(&model, &target);
        for _ in 0..200 {
            let (_, g) = bowl(&model, &target);
            adam.step(&mut model, &g, None).unwrap();
        }
        let (end, _) = bowl(&model, &target);
        assert!(end < 1e-3 * start, "{start} -> {end}");
    }

    #[test]
    fn masked_step_leaves_other_components() {
        let mut model = small_model();
        let before = model.clone();
        let target = SmileModel::random(
            2,
            &Architecture {
                backbone_hidden: vec![3],
                aux_hidden: None,
                latent_dim: 2,
            },
            &mut ChaCha8Rng::seed_from_u64(5),
        );
        let (_, g) = bowl(&model, &target);
        Adam::new(&model, AdamConfig::default())
            .step(&mut model, &g, Some(&[Component::Head]))
            .unwrap();
        assert_eq!(model.backbone(), before.backbone());
        assert_eq!(model.aux_low(), before.aux_low());
        assert_ne!(model.head(), before.head());
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut model = small_model();
        let mut tape = Tape::new();
        let params = model.register(&mut tape);
        let p = params.node(ParamId(0));
        let s = tape.sum(p);
        let bad = tape.scale(s, f64::NAN);
        let g = tape.gradient(bad, 1.0).unwrap();
        let err = Adam::new(&model, AdamConfig::default()).step(&mut model, &g, None);
        assert!(matches!(err, Err(Error::TrainingAbort(_))));
    }
}
