use bcenhance_nn::{AdamConfig, AdamState, ParamSet, Tensor};

use super::config::TrainConfig;
use super::data::NormStats;
use crate::error::{Error, Result};
use crate::losses::Variant;
use crate::model::{Checkpoint, Discriminator, DiscriminatorKind, Generator};
use crate::vocoder::F0Stats;

/// One network with its optimizer.
#[derive(Debug, Clone)]
pub struct Trained<N> {
    pub net: N,
    pub adam: AdamState,
}

/// Everything needed to continue training or to enhance.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    /// BC → AC generator.
    pub g_ba: Trained<Generator>,
    /// AC → BC generator.
    pub g_ab: Trained<Generator>,
    /// Classification discriminator (the only one for the baseline variant).
    pub d_c: Trained<Discriminator>,
    /// Defect discriminator (dual variant only).
    pub d_d: Option<Trained<Discriminator>>,
    pub iteration: u64,
    pub norm_bc: NormStats,
    pub norm_ac: NormStats,
    pub f0_bc: F0Stats,
    pub f0_ac: F0Stats,
}

pub trait HasParams {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
}

impl HasParams for Generator {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl HasParams for Discriminator {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl<N: HasParams> Trained<N> {
    fn new(net: N, lr: f64) -> Self {
        let adam = AdamState::new(AdamConfig::with_lr(lr), net.params());
        Self { net, adam }
    }

    fn save(&self, prefix: &str, ckpt: &mut Checkpoint) {
        let p = self.net.params();
        for id in p.ids() {
            let name = p.name(id);
            let t = p.get(id);
            ckpt.tensors.push((
                format!("{prefix}.{name}"),
                Tensor::new(t.shape(), t.data().to_vec()).expect("shape"),
            ));
            let i = id.index();
            let moment = |v: &Vec<f64>| Tensor::new(t.shape(), v.clone()).expect("moment shape");
            ckpt.tensors.push((
                format!("adam.{prefix}.m.{name}"),
                moment(&self.adam.first_moments()[i]),
            ));
            ckpt.tensors.push((
                format!("adam.{prefix}.v.{name}"),
                moment(&self.adam.second_moments()[i]),
            ));
        }
        ckpt.counters
            .push((format!("adam.{prefix}.step"), self.adam.step_count()));
    }

    fn load(&mut self, prefix: &str, ckpt: &Checkpoint) -> Result<()> {
        let mut first = Vec::new();
        let mut second = Vec::new();
        let ids: Vec<_> = self.net.params().ids().collect();
        for id in ids {
            let name = self.net.params().name(id).to_string();
            let stored = ckpt.tensor(&format!("{prefix}.{name}"))?;
            let target = self.net.params_mut().get_mut(id);
            if stored.shape() != target.shape() {
                return Err(Error::format(
                    "checkpoint",
                    format!(
                        "{prefix}.{name}: shape {:?}, model expects {:?}",
                        stored.shape(),
                        target.shape()
                    ),
                ));
            }
            target.data_mut().copy_from_slice(stored.data());
            first.push(
                ckpt.tensor(&format!("adam.{prefix}.m.{name}"))?
                    .data()
                    .to_vec(),
            );
            second.push(
                ckpt.tensor(&format!("adam.{prefix}.v.{name}"))?
                    .data()
                    .to_vec(),
            );
        }
        let step = ckpt.counter(&format!("adam.{prefix}.step"))?;
        self.adam = AdamState::from_parts(self.adam.config, step, first, second)?;
        Ok(())
    }
}

fn vec_tensor(v: &[f64]) -> Tensor {
    Tensor::new(&[v.len()], v.to_vec()).expect("1-D")
}

impl TrainState {
    /// Fresh networks; seeds are derived from `config.seed` so every network
    /// starts from different values.
    pub fn new(
        config: TrainConfig,
        norms: (NormStats, NormStats),
        f0: (F0Stats, F0Stats),
    ) -> Result<Self> {
        config.validate()?;
        let m = &config.model;
        let s = config.seed.wrapping_mul(16);
        let g_ba = Trained::new(Generator::build(s + 1, m), config.lr_generator);
        let g_ab = Trained::new(Generator::build(s + 2, m), config.lr_generator);
        let d_c = Trained::new(
            Discriminator::build(DiscriminatorKind::Classification, s + 3, m),
            config.lr_discriminator,
        );
        let d_d = (config.variant == Variant::Dual).then(|| {
            Trained::new(
                Discriminator::build(DiscriminatorKind::Defect, s + 4, m),
                config.lr_discriminator,
            )
        });
        Ok(Self {
            config,
            g_ba,
            g_ab,
            d_c,
            d_d,
            iteration: 0,
            norm_bc: norms.0,
            norm_ac: norms.1,
            f0_bc: f0.0,
            f0_ac: f0.1,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint {
            config_text: self.config.to_text(),
            iteration: self.iteration,
            seed: self.config.seed,
            counters: Vec::new(),
            tensors: Vec::new(),
        };
        self.g_ba.save("g_ba", &mut ckpt);
        self.g_ab.save("g_ab", &mut ckpt);
        self.d_c.save("d_c", &mut ckpt);
        if let Some(d) = &self.d_d {
            d.save("d_d", &mut ckpt);
        }
        for (name, n) in [("bc", &self.norm_bc), ("ac", &self.norm_ac)] {
            ckpt.tensors
                .push((format!("norm.{name}.mean"), vec_tensor(&n.mean)));
            ckpt.tensors
                .push((format!("norm.{name}.std"), vec_tensor(&n.std)));
        }
        for (name, f) in [("bc", &self.f0_bc), ("ac", &self.f0_ac)] {
            ckpt.tensors
                .push((format!("f0.{name}"), vec_tensor(&[f.mu, f.sigma])));
        }
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config = TrainConfig::from_text(&ckpt.config_text)?;
        let norm = |side: &str| -> Result<NormStats> {
            Ok(NormStats {
                mean: ckpt.tensor(&format!("norm.{side}.mean"))?.data().to_vec(),
                std: ckpt.tensor(&format!("norm.{side}.std"))?.data().to_vec(),
            })
        };
        let f0 = |side: &str| -> Result<F0Stats> {
            let t = ckpt.tensor(&format!("f0.{side}"))?;
            match t.data() {
                &[mu, sigma] => Ok(F0Stats { mu, sigma }),
                _ => Err(Error::format(
                    "checkpoint",
                    format!("f0.{side} must hold two values"),
                )),
            }
        };
        let mut state = Self::new(config, (norm("bc")?, norm("ac")?), (f0("bc")?, f0("ac")?))?;
        state.g_ba.load("g_ba", ckpt)?;
        state.g_ab.load("g_ab", ckpt)?;
        state.d_c.load("d_c", ckpt)?;
        if let Some(d) = &mut state.d_d {
            d.load("d_d", ckpt)?;
        }
        state.iteration = ckpt.iteration;
        Ok(state)
    }
}
