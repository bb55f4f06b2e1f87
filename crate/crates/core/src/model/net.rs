use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use crate::dynamics::Standardizer;
use crate::embedding::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::numcore::{ParamId, ParamStore, Session, Tape, Tensor, Var};

/// `a_raw` such that `exp(−softplus(a_raw)) = 0.9`.
pub(crate) fn a_raw_init() -> f64 {
    let a = -(0.9f64.ln()); // softplus(a_raw) = −ln 0.9
    a.exp_m1().ln()
}

/// Bias giving `Δ = softplus(b) = 1` for a zero input.
pub(crate) fn dt_bias_init() -> f64 {
    1f64.exp_m1().ln()
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LinearIds {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct SsmIds {
    pub w_in: ParamId,
    pub b_in: ParamId,
    pub w_dt: ParamId,
    pub b_dt: ParamId,
    pub a_raw: ParamId,
    pub w_b: ParamId,
    pub w_c: ParamId,
    pub w_out: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerIds {
    pub ssm: SsmIds,
    pub dec_e: Option<LinearIds>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct MppIds {
    pub psi: LinearIds,
    pub gain: ParamId,
    pub ssm: SsmIds,
}

#[derive(Clone, Debug)]
pub(crate) struct Ids {
    pub emb: LinearIds,
    pub layers: Vec<LayerIds>,
    pub dec_p: Option<LinearIds>,
    pub mpp: Vec<MppIds>,
    pub head: Option<LinearIds>,
}

struct Init<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.store.add(name, Tensor::new(shape.to_vec(), data).expect("shape matches"))
    }

    fn full(&mut self, name: String, shape: &[usize], value: f64) -> ParamId {
        self.store.add(name, Tensor::full(shape, value))
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize, bias: bool, zero: bool) -> LinearIds {
        let w = if zero {
            self.full(format!("{name}.w"), &[fan_in, fan_out], 0.0)
        } else {
            self.uniform(format!("{name}.w"), &[fan_in, fan_out], fan_in)
        };
        let b = bias.then(|| self.full(format!("{name}.b"), &[fan_out], 0.0));
        LinearIds { w, b }
    }

    fn ssm(&mut self, name: &str, cfg: &ModelConfig) -> SsmIds {
        let (d, di, h, n) = (cfg.d, cfg.inner(), cfg.heads, cfg.state_size);
        SsmIds {
            w_in: self.uniform(format!("{name}.w_in"), &[d, di], d),
            b_in: self.full(format!("{name}.b_in"), &[di], 0.0),
            w_dt: self.uniform(format!("{name}.w_dt"), &[d, h], d),
            b_dt: self.full(format!("{name}.b_dt"), &[h], dt_bias_init()),
            a_raw: self.full(format!("{name}.a_raw"), &[h], a_raw_init()),
            w_b: self.uniform(format!("{name}.w_b"), &[d, n], d),
            w_c: self.uniform(format!("{name}.w_c"), &[d, n], d),
            w_out: self.uniform(format!("{name}.w_out"), &[di, d], di),
        }
    }
}

/// A forecaster: configuration, learnable parameters and the input transform.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub embedding: EmbeddingConfig,
    /// Observed state dimension V.
    pub dim: usize,
    /// Patches of context the window head reads (window-head variant only).
    pub context_patches: usize,
    pub standardizer: Standardizer,
    pub params: ParamStore,
    pub(crate) ids: Ids,
}

impl Model {
    /// Fresh parameters drawn from `seed`.
    pub fn new(
        config: ModelConfig,
        embedding: EmbeddingConfig,
        dim: usize,
        context_patches: usize,
        standardizer: Standardizer,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        embedding.validate()?;
        if dim == 0 || standardizer.dim() != dim {
            return Err(Error::Config(format!(
                "state dimension {dim} does not match standardizer of dimension {}",
                standardizer.dim()
            )));
        }
        if config.encoder_oriented && context_patches == 0 {
            return Err(Error::Config("window head needs at least one context patch".into()));
        }
        let width = embedding.patch_width(dim);
        let d = config.d;
        let mut store = ParamStore::new();
        let mut init = Init {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let emb = init.linear("embed", width, d, true, false);
        let layers = (0..config.layers)
            .map(|l| {
                let ssm = init.ssm(&format!("layer{l}.ssm"), &config);
                let has_dec = config.rs_enabled || l + 1 == config.layers;
                let dec_e = has_dec.then(|| init.linear(&format!("layer{l}.dec_e"), d, d, true, true));
                LayerIds { ssm, dec_e }
            })
            .collect();
        let (dec_p, head) = if config.encoder_oriented {
            let out = context_patches * embedding.patch_size * dim;
            (None, Some(init.linear("head", context_patches * d, out, true, false)))
        } else {
            (Some(init.linear("dec_p", d, width, true, false)), None)
        };
        let mpp = (0..config.effective_mpp_depth())
            .map(|m| MppIds {
                psi: init.linear(&format!("mpp{m}.psi"), 2 * d, d, true, false),
                gain: init.full(format!("mpp{m}.gain"), &[d], 1.0),
                ssm: init.ssm(&format!("mpp{m}.ssm"), &config),
            })
            .collect();
        let ids = Ids {
            emb,
            layers,
            dec_p,
            mpp,
            head,
        };
        Ok(Self {
            config,
            embedding,
            dim,
            context_patches,
            standardizer,
            params: store,
            ids,
        })
    }

    pub fn patch_width(&self) -> usize {
        self.embedding.patch_width(self.dim)
    }

    pub fn patch_size(&self) -> usize {
        self.embedding.patch_size
    }

    pub fn delay(&self) -> (usize, usize) {
        self.embedding.effective()
    }

    /// Steps the window head emits per forward pass.
    pub fn window_len(&self) -> usize {
        self.context_patches * self.embedding.patch_size
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Parameters used at inference (the multi-patch modules are training-only).
    pub fn inference_parameter_count(&self) -> usize {
        self.params
            .names()
            .iter()
            .zip(self.params.tensors())
            .filter(|(n, _)| !n.starts_with("mpp"))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Replaces every parameter with the same-named tensor from `store`.
    pub fn load_params(&mut self, store: &ParamStore) -> Result<()> {
        if store.len() != self.params.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} tensors, model expects {}",
                store.len(),
                self.params.len()
            )));
        }
        for i in 0..self.params.len() {
            let name = self.params.names()[i].clone();
            let src = store
                .find(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks tensor {name}")))?;
            let t = store.get(src);
            if t.shape() != self.params.tensors()[i].shape() {
                return Err(Error::Config(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    self.params.tensors()[i].shape()
                )));
            }
            self.params.tensors_mut()[i] = t.clone();
        }
        Ok(())
    }

    /// Hex SHA-256 over the architecture, embedding and state dimension.
    pub fn config_hash(&self) -> String {
        let key = serde_json::json!({
            "model": self.config,
            "embedding": self.embedding,
            "dim": self.dim,
            "context_patches": self.context_patches,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }
}

/// Per-layer recurrent states of the trunk (`None` until the first token).
#[derive(Clone, Debug, Default)]
pub struct StackState {
    pub(crate) h: Vec<Option<Var>>,
}

impl StackState {
    pub fn new(layers: usize) -> Self {
        Self { h: vec![None; layers] }
    }
}

#[derive(Clone, Debug)]
pub struct TrunkOut {
    /// Sum of layer contributions fed to the patch decoder.
    pub e: Var,
    /// Per-layer decoder outputs (only the last layer's when the residual stack is off).
    pub contributions: Vec<Var>,
}

/// Builds the model's computation on a tape, token by token.
pub struct Graph<'m> {
    pub model: &'m Model,
    pub sess: Session,
}

impl<'m> Graph<'m> {
    /// Parameters are trainable leaves.
    pub fn new(model: &'m Model) -> Self {
        Self {
            model,
            sess: Session::new(&model.params),
        }
    }

    /// Parameters are constants (inference).
    pub fn frozen(model: &'m Model) -> Self {
        Self {
            model,
            sess: Session::frozen(&model.params),
        }
    }

    pub fn tape(&mut self) -> &mut Tape {
        &mut self.sess.tape
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.sess.tape.constant(t)
    }

    fn linear(&mut self, ids: LinearIds, x: Var) -> Result<Var> {
        let w = self.sess.param(ids.w);
        let y = self.sess.tape.matmul(x, w)?;
        match ids.b {
            Some(b) => {
                let b = self.sess.param(b);
                self.sess.tape.add(y, b)
            }
            None => Ok(y),
        }
    }

    /// One recurrent step of a selective state-space layer on `x: [B, d]`.
    fn ssm(&mut self, ids: SsmIds, x: Var, h: &mut Option<Var>) -> Result<Var> {
        let cfg = &self.model.config;
        let (heads, p, n) = (cfg.heads, cfg.head_dim(), cfg.state_size);
        let batch = self.sess.tape.shape(x)[0];
        let p_ = |id| self.sess.param(id);
        let (w_in, b_in, w_dt, b_dt) = (p_(ids.w_in), p_(ids.b_in), p_(ids.w_dt), p_(ids.b_dt));
        let (a_raw, w_b, w_c, w_out) = (p_(ids.a_raw), p_(ids.w_b), p_(ids.w_c), p_(ids.w_out));
        let exact = cfg.exact_zoh;
        let t = &mut self.sess.tape;
        let x = if cfg.pre_norm { t.rms_norm(x, 1e-6)? } else { x };

        let u = t.matmul(x, w_in)?;
        let u = t.add(u, b_in)?;
        let u = t.silu(u)?;
        let u = t.reshape(u, &[batch, heads, p, 1])?;

        let dt = t.matmul(x, w_dt)?;
        let dt = t.add(dt, b_dt)?;
        let dt = t.softplus(dt)?;
        let dt = t.reshape(dt, &[batch, heads, 1, 1])?;

        let a = t.softplus(a_raw)?;
        let a = t.neg(a)?;
        let a = t.reshape(a, &[1, heads, 1, 1])?;
        let da = t.mul(dt, a)?;
        let a_bar = t.exp(da)?;
        let coef = if exact {
            let num = t.add_scalar(a_bar, -1.0)?;
            let inv = t.recip(a)?;
            t.mul(num, inv)?
        } else {
            dt
        };

        let bt = t.matmul(x, w_b)?;
        let bt = t.reshape(bt, &[batch, 1, 1, n])?;
        let ct = t.matmul(x, w_c)?;
        let ct = t.reshape(ct, &[batch, 1, 1, n])?;

        let drive = t.mul(coef, u)?;
        let drive = t.mul(drive, bt)?;
        let h_new = match *h {
            Some(prev) => {
                let decayed = t.mul(a_bar, prev)?;
                t.add(decayed, drive)?
            }
            None => drive,
        };
        *h = Some(h_new);
        let y = t.mul(h_new, ct)?;
        let y = t.sum_axis(y, 3)?;
        let y = t.reshape(y, &[batch, heads * p])?;
        t.matmul(y, w_out)
    }

    /// `S = P·W_emb + b_emb` for `patch: [B, width]`.
    pub fn embed(&mut self, patch: Var) -> Result<Var> {
        let ids = self.model.ids.emb;
        self.linear(ids, patch)
    }

    /// Residual (or conventional) stack on one token.
    pub fn trunk(&mut self, s: Var, state: &mut StackState) -> Result<TrunkOut> {
        let layers = self.model.ids.layers.clone();
        let rs = self.model.config.rs_enabled;
        let mut stream = s;
        let mut contributions = Vec::with_capacity(layers.len());
        let last = layers.len() - 1;
        for (l, ids) in layers.iter().enumerate() {
            let y = self.ssm(ids.ssm, stream, &mut state.h[l])?;
            if rs {
                let dec = ids.dec_e.expect("residual layers carry a decoder");
                let e_hat = self.linear(dec, y)?;
                stream = self.sess.tape.sub(stream, e_hat)?;
                contributions.push(e_hat);
            } else if l == last {
                let dec = ids.dec_e.expect("last layer carries a decoder");
                contributions.push(self.linear(dec, y)?);
            } else {
                stream = y;
            }
        }
        let mut e = contributions[0];
        for &c in &contributions[1..] {
            e = self.sess.tape.add(e, c)?;
        }
        Ok(TrunkOut { e, contributions })
    }

    /// Next-patch prediction from a trunk sum.
    pub fn decode(&mut self, e: Var) -> Result<Var> {
        let ids = self
            .model
            .ids
            .dec_p
            .ok_or_else(|| Error::Config("window-head model has no patch decoder".into()))?;
        self.linear(ids, e)
    }

    /// Multi-patch module at `depth` (0-based): fuses the normalized previous
    /// hidden with the teacher token and advances the module's own recurrence.
    /// Returns the new hidden and its decoded patch.
    pub fn mpp(&mut self, depth: usize, prev: Var, teacher: Var, h: &mut Option<Var>) -> Result<(Var, Var)> {
        let ids = self.model.ids.mpp[depth];
        let gain = self.sess.param(ids.gain);
        let t = &mut self.sess.tape;
        let normed = t.rms_norm(prev, 1e-6)?;
        let normed = t.mul(normed, gain)?;
        let fused = t.concat(&[normed, teacher], 1)?;
        let fused = self.linear(ids.psi, fused)?;
        let v = self.ssm(ids.ssm, fused, h)?;
        let pred = self.decode(v)?;
        Ok((v, pred))
    }

    /// Window head: flattened trunk sums of the context patches → `[B, window_len · V]`.
    pub fn window_head(&mut self, sums: &[Var]) -> Result<Var> {
        let ids = self
            .model
            .ids
            .head
            .ok_or_else(|| Error::Config("model has no window head".into()))?;
        if sums.len() != self.model.context_patches {
            return Err(Error::NotEnoughPatches {
                have: sums.len(),
                need: self.model.context_patches,
            });
        }
        let flat = self.sess.tape.concat(sums, 1)?;
        self.linear(ids, flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(cfg: ModelConfig) -> Model {
        Model::new(cfg, EmbeddingConfig::default(), 3, 3, Standardizer::identity(3), 7).unwrap()
    }

    #[test]
    fn initial_decay_is_point_nine() {
        let a = -crate::numcore::softplus(a_raw_init());
        assert!((a.exp() - 0.9).abs() < 1e-12);
        assert!((crate::numcore::softplus(dt_bias_init()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ablations_change_structure() {
        let base = model(ModelConfig::default());
        let no_rs = model(ModelConfig {
            rs_enabled: false,
            ..ModelConfig::default()
        });
        let no_mpp = model(ModelConfig {
            mpp_depth: 0,
            ..ModelConfig::default()
        });
        let enc = model(ModelConfig {
            encoder_oriented: true,
            ..ModelConfig::default()
        });
        let counts = [
            base.parameter_count(),
            no_rs.parameter_count(),
            no_mpp.parameter_count(),
            enc.parameter_count(),
        ];
        for i in 0..counts.len() {
            for j in i + 1..counts.len() {
                assert_ne!(counts[i], counts[j]);
            }
        }
        assert_eq!(base.inference_parameter_count(), no_mpp.parameter_count());
    }

    #[test]
    fn same_seed_same_params() {
        let a = model(ModelConfig::default());
        let b = model(ModelConfig::default());
        assert_eq!(a.params.tensors(), b.params.tensors());
        assert_eq!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn rejects_bad_heads() {
        let cfg = ModelConfig {
            heads: 3,
            ..ModelConfig::default()
        };
        assert!(Model::new(cfg, EmbeddingConfig::default(), 3, 3, Standardizer::identity(3), 0).is_err());
    }
}
