//! Adam and the patch-pair training loop.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{augment, AugmentConfig};
use crate::metrics::chamfer;
use crate::model::{init_params, save_checkpoint, Model, ModelConfig};
use crate::pipeline::PatchPair;
use crate::tensor::{ParamStore, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First and second moments per parameter, in [`ParamStore`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update. Every parameter needs a gradient; nothing
/// is modified when one is missing or misshapen.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &[Option<Tensor>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "adam_step got {} gradients and {} moments for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for id in params.ids() {
        match &grads[id.index()] {
            None => {
                return Err(Error::Contract(format!(
                    "missing gradient for parameter `{}`",
                    params.name(id)
                )))
            }
            Some(g) if g.shape() != params.get(id).shape() => {
                return Err(Error::Contract(format!(
                    "gradient for `{}` has shape {:?}, parameter has {:?}",
                    params.name(id),
                    g.shape(),
                    params.get(id).shape()
                )))
            }
            Some(_) => {}
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - cfg.beta1.powf(t);
    let c2 = 1.0 - cfg.beta2.powf(t);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let i = id.index();
        let g = grads[i].as_ref().expect("checked above").data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let w = params.get_mut(id).data_mut();
        for j in 0..w.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            w[j] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Save a checkpoint every this many epochs (and always after the last).
    pub checkpoint_every: Option<usize>,
    pub checkpoint_path: Option<PathBuf>,
    pub loss_log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 64,
            epochs: 100,
            augment: AugmentConfig::default(),
            seed: 0,
            checkpoint_every: None,
            checkpoint_path: None,
            loss_log_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting; `Ok(false)` for keys that are not
    /// training settings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        let bad = |e: &dyn std::fmt::Display| Error::Config(format!("{key} = `{v}`: {e}"));
        let float = || v.parse::<f64>().map_err(|e| bad(&e));
        let int = || v.parse::<usize>().map_err(|e| bad(&e));
        let flag = || v.parse::<bool>().map_err(|e| bad(&e));
        match key {
            "lr" => self.adam.lr = float()?,
            "beta1" => self.adam.beta1 = float()?,
            "beta2" => self.adam.beta2 = float()?,
            "eps" => self.adam.eps = float()?,
            "batch_size" => self.batch_size = int()?,
            "epochs" => self.epochs = int()?,
            "seed" => self.seed = v.parse::<u64>().map_err(|e| bad(&e))?,
            "checkpoint_every" => self.checkpoint_every = Some(int()?),
            "augment" => {
                self.augment = if flag()? {
                    AugmentConfig::default()
                } else {
                    AugmentConfig::OFF
                }
            }
            "rotate" => self.augment.rotate = flag()?,
            "scale" => self.augment.scale = flag()?.then_some((0.8, 1.2)),
            "jitter" => self.augment.jitter = flag()?.then_some((0.005, 0.015)),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Training state: layout, weights, optimizer and the seeded RNG that
/// drives shuffling and augmentation.
pub struct Trainer {
    pub model: Model,
    pub params: ParamStore,
    pub adam: AdamState,
    pub config: TrainConfig,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: Model, params: ParamStore, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(&params);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            model,
            params,
            adam,
            config,
            rng,
        })
    }

    /// Chamfer loss and parameter gradients of one pair, augmented per the
    /// config.
    pub fn pair_gradients(&mut self, pair: &PatchPair) -> Result<(f64, Vec<Option<Tensor>>)> {
        let (input, gt) = if self.config.augment == AugmentConfig::OFF {
            (pair.input.clone(), pair.gt.clone())
        } else {
            augment(&pair.input, &pair.gt, &mut self.rng, &self.config.augment)?
        };
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let out = self.model.forward(&mut tape, &bound, &input)?;
        let loss = chamfer(&mut tape, out, &gt)?;
        let value = tape.value(loss).item().expect("chamfer is scalar");
        if !value.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        let mut grads = tape.backward(loss)?;
        let g = bound.vars().iter().map(|&v| grads.take(v)).collect();
        Ok((value, g))
    }

    /// One optimizer step on the batch-averaged gradient; returns the mean
    /// loss before the update.
    pub fn step(&mut self, batch: &[&PatchPair]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Argument("empty training batch".into()));
        }
        let mut sum: Vec<Tensor> = self.params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        let mut total = 0.0;
        for pair in batch {
            let (loss, grads) = self.pair_gradients(pair)?;
            total += loss;
            for (acc, g) in sum.iter_mut().zip(grads) {
                let g = g.ok_or_else(|| Error::Contract("parameter gradient missing".into()))?;
                acc.add_assign(&g);
            }
        }
        let inv = 1.0 / batch.len() as f64;
        let grads: Vec<Option<Tensor>> = sum
            .into_iter()
            .map(|mut t| {
                t.data_mut().iter_mut().for_each(|v| *v *= inv);
                Some(t)
            })
            .collect();
        adam_step(&mut self.params, &grads, &mut self.adam, &self.config.adam)?;
        Ok(total * inv)
    }

    /// One pass over `data` in a seeded shuffled order; returns the mean
    /// per-pair loss.
    pub fn epoch(&mut self, data: &[PatchPair]) -> Result<f64> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&PatchPair> = chunk.iter().map(|&i| &data[i]).collect();
            total += self.step(&batch)? * batch.len() as f64;
        }
        Ok(total / data.len() as f64)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(path, &self.model.config, &self.params, Some(&self.adam))
    }
}

/// Result of [`train`]: final weights, optimizer state and per-epoch mean loss.
pub struct TrainOutput {
    pub model: Model,
    pub params: ParamStore,
    pub adam: AdamState,
    pub losses: Vec<f64>,
}

/// Checks every pair against the model's ratio and neighbor requirements.
pub fn validate_pairs(data: &[PatchPair], cfg: &ModelConfig) -> Result<()> {
    for pair in data {
        let problem = if pair.input.len() < cfg.min_points() {
            Some(format!(
                "input has {} points, model needs at least {}",
                pair.input.len(),
                cfg.min_points()
            ))
        } else if pair.gt.len() != pair.input.len() * cfg.ratio {
            Some(format!(
                "gt has {} points, expected {} for {} inputs at ratio {}",
                pair.gt.len(),
                pair.input.len() * cfg.ratio,
                pair.input.len(),
                cfg.ratio
            ))
        } else {
            None
        };
        if let Some(detail) = problem {
            return Err(Error::Data {
                path: PathBuf::from(&pair.source),
                detail,
            });
        }
    }
    Ok(())
}

/// Trains a freshly initialized model (seeded by `cfg.seed`) on `data`.
pub fn train(data: &[PatchPair], model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutput> {
    if data.is_empty() {
        return Err(Error::Argument("no training pairs".into()));
    }
    validate_pairs(data, model_cfg)?;
    let (model, params) = init_params(model_cfg, cfg.seed)?;
    let mut trainer = Trainer::new(model, params, cfg.clone())?;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for e in 0..cfg.epochs {
        let loss = trainer.epoch(data)?;
        info!("epoch {} mean chamfer {loss:.6e}", e + 1);
        losses.push(loss);
        if let (Some(every), Some(path)) = (cfg.checkpoint_every, &cfg.checkpoint_path) {
            if (e + 1) % every == 0 && e + 1 < cfg.epochs {
                debug!("checkpoint after epoch {}", e + 1);
                trainer.save(path)?;
            }
        }
        if let Some(path) = &cfg.loss_log_path {
            write_loss_log(path, &losses)?;
        }
    }
    if let Some(path) = &cfg.checkpoint_path {
        trainer.save(path)?;
    }
    Ok(TrainOutput {
        model: trainer.model,
        params: trainer.params,
        adam: trainer.adam,
        losses,
    })
}

/// `epoch,mean_cd` CSV.
pub fn format_loss_log(losses: &[f64]) -> String {
    let mut s = String::from("epoch,mean_cd\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{},{l:e}", i + 1);
    }
    s
}

pub fn write_loss_log(path: impl AsRef<Path>, losses: &[f64]) -> Result<()> {
    fs::write(path, format_loss_log(losses))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(&[1], vec![w]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_store(0.5);
        let mut st = AdamState::new(&p);
        st.m[0] = Tensor::new(&[1], vec![1.0]).unwrap();
        let cfg = AdamConfig::default();
        adam_step(&mut p, &[Some(Tensor::zeros(&[1]))], &mut st, &cfg).unwrap();
        assert_eq!(st.step, 1);
        assert_eq!(st.m[0].data()[0], 0.9);
        assert!(p.get(p.ids().next().unwrap()).data()[0] < 0.5);

        let mut p = scalar_store(0.5);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &[Some(Tensor::zeros(&[1]))], &mut st, &cfg).unwrap();
        assert_eq!(p, scalar_store(0.5));
    }

    #[test]
    fn quadratic_converges() {
        let mut p = scalar_store(1.0);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        for k in 0..200 {
            let w = p.iter().next().unwrap().1.data()[0];
            adam_step(&mut p, &[Some(Tensor::new(&[1], vec![2.0 * w]).unwrap())], &mut st, &cfg).unwrap();
            assert_eq!(st.step, k + 1);
        }
        let w = p.iter().next().unwrap().1.data()[0];
        assert!(w.abs() < 1e-2, "{w}");
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut p = scalar_store(1.0);
        let mut st = AdamState::new(&p);
        let err = adam_step(&mut p, &[None], &mut st, &AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("`w`"), "{err}");
        assert_eq!(st.step, 0);
    }

    #[test]
    fn settings_parse() {
        let mut c = TrainConfig::default();
        assert!(c.set("lr", "0.01").unwrap());
        assert!(c.set("augment", "false").unwrap());
        assert!(!c.set("growth", "8").unwrap());
        assert!(c.set("epochs", "x").is_err());
        assert_eq!(c.adam.lr, 0.01);
        assert_eq!(c.augment, AugmentConfig::OFF);
        assert_eq!(format_loss_log(&[0.5]), "epoch,mean_cd\n1,5e-1\n");
    }
}
