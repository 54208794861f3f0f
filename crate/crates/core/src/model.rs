//! The two-way cross-modal autoencoder.
//!
//! Four networks share one latent space of size `Z`:
//!
//! * video encoder `C → Z` and video decoder `Z → C`
//! * text encoder `D → Z` and text decoder `Z → D`
//!
//! A training step runs six passes per pair (two encodes, two same-modal
//! decodes, two cross-modal decodes) plus two encodes for the negative pair.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{ensure_dim, Error, Result};
use crate::nn::{geometric_sizes, ForwardCache, Mlp, MlpGrads, MlpSpec, Mode};
use crate::numerics::SeededRng;

pub const ARTIFACT_KIND: &str = "autoencoder";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Video feature size.
    pub c: usize,
    /// Text vector size.
    pub d: usize,
    /// Latent size.
    pub z: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub config_name: String,
    pub dims: ModelDims,
    pub dropout: f64,
    #[serde(default)]
    pub final_relu: bool,
    /// Two hidden sizes for the video encoder; the decoder mirrors them.
    /// Geometric interpolation between `C` and `Z` when absent.
    #[serde(default)]
    pub video_hidden: Option<Vec<usize>>,
    #[serde(default)]
    pub text_hidden: Option<Vec<usize>>,
}

impl ArchConfig {
    pub fn new(dims: ModelDims, dropout: f64) -> Self {
        ArchConfig {
            config_name: "custom".into(),
            dims,
            dropout,
            final_relu: false,
            video_hidden: None,
            text_hidden: None,
        }
    }

    pub fn kinetics(z: usize) -> Self {
        ArchConfig {
            config_name: "kinetics".into(),
            ..Self::new(ModelDims { c: 1024, d: 300, z }, 0.5)
        }
    }

    pub fn iapr(z: usize) -> Self {
        ArchConfig {
            config_name: "iapr".into(),
            ..Self::new(ModelDims { c: 128, d: 64, z }, 0.5)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ModelDims { c, d, z } = self.dims;
        if c == 0 || d == 0 || z == 0 {
            return Err(Error::invalid(format!(
                "model dims must be positive (C={c}, D={d}, Z={z})"
            )));
        }
        if z > c.min(d) {
            return Err(Error::invalid(format!(
                "latent size Z={z} exceeds min(C={c}, D={d}); the latent space must be a bottleneck"
            )));
        }
        for hidden in [&self.video_hidden, &self.text_hidden].into_iter().flatten() {
            if hidden.len() != 2 {
                return Err(Error::invalid(format!(
                    "explicit hidden sizes need exactly 2 entries, got {hidden:?}"
                )));
            }
        }
        Ok(())
    }

    fn encoder_sizes(&self, input: usize, hidden: &Option<Vec<usize>>) -> Vec<usize> {
        match hidden {
            Some(h) => vec![input, h[0], h[1], self.dims.z],
            None => geometric_sizes(input, self.dims.z, 3),
        }
    }

    fn spec(&self, sizes: Vec<usize>) -> Result<MlpSpec> {
        let mut spec = MlpSpec::new(sizes, self.dropout)?;
        spec.final_relu = self.final_relu;
        Ok(spec)
    }

    fn specs(&self) -> Result<[MlpSpec; 4]> {
        let ve = self.encoder_sizes(self.dims.c, &self.video_hidden);
        let te = self.encoder_sizes(self.dims.d, &self.text_hidden);
        let vd: Vec<usize> = ve.iter().rev().copied().collect();
        let td: Vec<usize> = te.iter().rev().copied().collect();
        Ok([self.spec(ve)?, self.spec(vd)?, self.spec(te)?, self.spec(td)?])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossModalAutoencoder {
    arch: ArchConfig,
    seed: u64,
    video_encoder: Mlp,
    video_decoder: Mlp,
    text_encoder: Mlp,
    text_decoder: Mlp,
    class_manifest: Vec<String>,
}

/// Outputs and caches of the six passes over one positive pair.
#[derive(Debug, Clone)]
pub struct PairForward {
    pub z_v: Vec<f64>,
    pub z_t: Vec<f64>,
    pub v_recon: Vec<f64>,
    pub t_recon: Vec<f64>,
    pub v_cross: Vec<f64>,
    pub t_cross: Vec<f64>,
    caches: [ForwardCache; 6],
}

/// Latents of an unpaired (negative) video/text pair.
#[derive(Debug, Clone)]
pub struct NegativeForward {
    pub z_v: Vec<f64>,
    pub z_t: Vec<f64>,
    caches: [ForwardCache; 2],
}

/// Dropout masks of every pass, for replaying a forward exactly.
pub type PassMasks = Vec<Option<Vec<f64>>>;

impl PairForward {
    /// Masks in pass order: E_V, E_T, G_V(z_v), G_T(z_t), G_V(z_t), G_T(z_v).
    pub fn masks(&self) -> [PassMasks; 6] {
        self.caches.clone().map(|c| c.masks().to_vec())
    }

    pub fn caches(&self) -> &[ForwardCache; 6] {
        &self.caches
    }
}

impl NegativeForward {
    pub fn masks(&self) -> [PassMasks; 2] {
        self.caches.clone().map(|c| c.masks().to_vec())
    }

    pub fn caches(&self) -> &[ForwardCache; 2] {
        &self.caches
    }
}

/// Loss gradients with respect to every model output of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads {
    pub z_v: Vec<f64>,
    pub z_t: Vec<f64>,
    pub v_recon: Vec<f64>,
    pub t_recon: Vec<f64>,
    pub v_cross: Vec<f64>,
    pub t_cross: Vec<f64>,
    pub z_v_neg: Vec<f64>,
    pub z_t_neg: Vec<f64>,
}

impl OutputGrads {
    pub fn zeros(dims: ModelDims) -> Self {
        OutputGrads {
            z_v: vec![0.0; dims.z],
            z_t: vec![0.0; dims.z],
            v_recon: vec![0.0; dims.c],
            t_recon: vec![0.0; dims.d],
            v_cross: vec![0.0; dims.c],
            t_cross: vec![0.0; dims.d],
            z_v_neg: vec![0.0; dims.z],
            z_t_neg: vec![0.0; dims.z],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub video_encoder: MlpGrads,
    pub video_decoder: MlpGrads,
    pub text_encoder: MlpGrads,
    pub text_decoder: MlpGrads,
}

impl ModelGrads {
    pub fn zeros_for(model: &CrossModalAutoencoder) -> Self {
        ModelGrads {
            video_encoder: MlpGrads::zeros_for(model.video_encoder.spec()),
            video_decoder: MlpGrads::zeros_for(model.video_decoder.spec()),
            text_encoder: MlpGrads::zeros_for(model.text_encoder.spec()),
            text_decoder: MlpGrads::zeros_for(model.text_decoder.spec()),
        }
    }

    /// Same order as [`CrossModalAutoencoder::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.video_encoder.slices();
        out.extend(self.video_decoder.slices());
        out.extend(self.text_encoder.slices());
        out.extend(self.text_decoder.slices());
        out
    }

    pub fn add_scaled(&mut self, other: &ModelGrads, s: f64) {
        self.video_encoder.add_scaled(&other.video_encoder, s);
        self.video_decoder.add_scaled(&other.video_decoder, s);
        self.text_encoder.add_scaled(&other.text_encoder, s);
        self.text_decoder.add_scaled(&other.text_decoder, s);
    }

    pub fn scale(&mut self, s: f64) {
        self.video_encoder.scale(s);
        self.video_decoder.scale(s);
        self.text_encoder.scale(s);
        self.text_decoder.scale(s);
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    kind: String,
    #[serde(rename = "C")]
    c: usize,
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "Z")]
    z: usize,
    config_name: String,
    seed: u64,
    arch: ArchConfig,
    networks: Vec<MlpSpec>,
    class_manifest: Vec<String>,
}

impl CrossModalAutoencoder {
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let ModelDims { c, d, z } = arch.dims;
        if z == c.min(d) {
            log::warn!("latent size Z={z} equals min(C, D); the bottleneck is not strictly under-complete");
        }
        let [ve, vd, te, td] = arch.specs()?;
        let init = SeededRng::new(seed).substream("init");
        Ok(CrossModalAutoencoder {
            video_encoder: Mlp::init(&ve, &mut init.substream("video_encoder"))?,
            video_decoder: Mlp::init(&vd, &mut init.substream("video_decoder"))?,
            text_encoder: Mlp::init(&te, &mut init.substream("text_encoder"))?,
            text_decoder: Mlp::init(&td, &mut init.substream("text_decoder"))?,
            arch,
            seed,
            class_manifest: Vec::new(),
        })
    }

    pub fn from_networks(
        arch: ArchConfig,
        seed: u64,
        networks: [Mlp; 4],
    ) -> Result<Self> {
        arch.validate()?;
        let [video_encoder, video_decoder, text_encoder, text_decoder] = networks;
        let ModelDims { c, d, z } = arch.dims;
        let shapes = [
            ("video encoder", &video_encoder, c, z),
            ("video decoder", &video_decoder, z, c),
            ("text encoder", &text_encoder, d, z),
            ("text decoder", &text_decoder, z, d),
        ];
        for (name, net, i, o) in shapes {
            ensure_dim(&format!("{name} input"), i, net.in_dim())?;
            ensure_dim(&format!("{name} output"), o, net.out_dim())?;
        }
        Ok(CrossModalAutoencoder {
            arch,
            seed,
            video_encoder,
            video_decoder,
            text_encoder,
            text_decoder,
            class_manifest: Vec::new(),
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn dims(&self) -> ModelDims {
        self.arch.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn networks(&self) -> [&Mlp; 4] {
        [
            &self.video_encoder,
            &self.video_decoder,
            &self.text_encoder,
            &self.text_decoder,
        ]
    }

    /// Classes the model was trained on; zero-shot evaluation refuses these.
    pub fn class_manifest(&self) -> &[String] {
        &self.class_manifest
    }

    pub fn set_class_manifest(&mut self, classes: Vec<String>) {
        self.class_manifest = classes;
    }

    pub fn mode(&self) -> Mode {
        self.video_encoder.mode()
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.video_encoder.set_mode(mode);
        self.video_decoder.set_mode(mode);
        self.text_encoder.set_mode(mode);
        self.text_decoder.set_mode(mode);
    }

    // Single maps run without dropout.

    pub fn encode_video(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.video_encoder.infer(v)
    }

    pub fn encode_text(&self, t: &[f64]) -> Result<Vec<f64>> {
        self.text_encoder.infer(t)
    }

    pub fn decode_video(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.video_decoder.infer(z)
    }

    pub fn decode_text(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.text_decoder.infer(z)
    }

    /// `G_T(E_V(v))`
    pub fn video_to_text(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.decode_text(&self.encode_video(v)?)
    }

    /// `G_V(E_T(t))`
    pub fn text_to_video(&self, t: &[f64]) -> Result<Vec<f64>> {
        self.decode_video(&self.encode_text(t)?)
    }

    /// All six passes for a pair, each with its own dropout draw.
    pub fn pair_forward(&self, v: &[f64], t: &[f64], rng: &mut SeededRng) -> Result<PairForward> {
        ensure_dim("video input", self.arch.dims.c, v.len())?;
        ensure_dim("text input", self.arch.dims.d, t.len())?;
        let (z_v, c0) = self.video_encoder.forward(v, rng)?;
        let (z_t, c1) = self.text_encoder.forward(t, rng)?;
        let (v_recon, c2) = self.video_decoder.forward(&z_v, rng)?;
        let (t_recon, c3) = self.text_decoder.forward(&z_t, rng)?;
        let (v_cross, c4) = self.video_decoder.forward(&z_t, rng)?;
        let (t_cross, c5) = self.text_decoder.forward(&z_v, rng)?;
        Ok(PairForward {
            z_v,
            z_t,
            v_recon,
            t_recon,
            v_cross,
            t_cross,
            caches: [c0, c1, c2, c3, c4, c5],
        })
    }

    /// Replays [`pair_forward`](Self::pair_forward) with fixed masks.
    pub fn pair_forward_with_masks(
        &self,
        v: &[f64],
        t: &[f64],
        masks: &[PassMasks; 6],
    ) -> Result<PairForward> {
        ensure_dim("video input", self.arch.dims.c, v.len())?;
        ensure_dim("text input", self.arch.dims.d, t.len())?;
        let (z_v, c0) = self.video_encoder.forward_with_masks(v, &masks[0])?;
        let (z_t, c1) = self.text_encoder.forward_with_masks(t, &masks[1])?;
        let (v_recon, c2) = self.video_decoder.forward_with_masks(&z_v, &masks[2])?;
        let (t_recon, c3) = self.text_decoder.forward_with_masks(&z_t, &masks[3])?;
        let (v_cross, c4) = self.video_decoder.forward_with_masks(&z_t, &masks[4])?;
        let (t_cross, c5) = self.text_decoder.forward_with_masks(&z_v, &masks[5])?;
        Ok(PairForward {
            z_v,
            z_t,
            v_recon,
            t_recon,
            v_cross,
            t_cross,
            caches: [c0, c1, c2, c3, c4, c5],
        })
    }

    pub fn negative_forward(
        &self,
        v_neg: &[f64],
        t_neg: &[f64],
        rng: &mut SeededRng,
    ) -> Result<NegativeForward> {
        let (z_v, c0) = self.video_encoder.forward(v_neg, rng)?;
        let (z_t, c1) = self.text_encoder.forward(t_neg, rng)?;
        Ok(NegativeForward {
            z_v,
            z_t,
            caches: [c0, c1],
        })
    }

    pub fn negative_forward_with_masks(
        &self,
        v_neg: &[f64],
        t_neg: &[f64],
        masks: &[PassMasks; 2],
    ) -> Result<NegativeForward> {
        let (z_v, c0) = self.video_encoder.forward_with_masks(v_neg, &masks[0])?;
        let (z_t, c1) = self.text_encoder.forward_with_masks(t_neg, &masks[1])?;
        Ok(NegativeForward {
            z_v,
            z_t,
            caches: [c0, c1],
        })
    }

    /// Backpropagates output gradients through every pass and accumulates
    /// parameter gradients into `grads`.
    pub fn backward(
        &self,
        fwd: &PairForward,
        neg: Option<&NegativeForward>,
        out: &OutputGrads,
        grads: &mut ModelGrads,
    ) -> Result<()> {
        let [c_ev, c_et, c_gv_v, c_gt_t, c_gv_t, c_gt_v] = &fwd.caches;
        let mut dz_v = out.z_v.clone();
        let mut dz_t = out.z_t.clone();

        let add = |acc: &mut Vec<f64>, g: Vec<f64>| acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);

        let g = self
            .video_decoder
            .backward_into(c_gv_v, &out.v_recon, &mut grads.video_decoder)?;
        add(&mut dz_v, g);
        let g = self
            .text_decoder
            .backward_into(c_gt_v, &out.t_cross, &mut grads.text_decoder)?;
        add(&mut dz_v, g);
        let g = self
            .text_decoder
            .backward_into(c_gt_t, &out.t_recon, &mut grads.text_decoder)?;
        add(&mut dz_t, g);
        let g = self
            .video_decoder
            .backward_into(c_gv_t, &out.v_cross, &mut grads.video_decoder)?;
        add(&mut dz_t, g);

        self.video_encoder
            .backward_into(c_ev, &dz_v, &mut grads.video_encoder)?;
        self.text_encoder
            .backward_into(c_et, &dz_t, &mut grads.text_encoder)?;

        if let Some(neg) = neg {
            let [c_nv, c_nt] = &neg.caches;
            self.video_encoder
                .backward_into(c_nv, &out.z_v_neg, &mut grads.video_encoder)?;
            self.text_encoder
                .backward_into(c_nt, &out.z_t_neg, &mut grads.text_encoder)?;
        }
        Ok(())
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.networks()
            .into_iter()
            .flat_map(|n| n.param_slices())
            .collect()
    }

    /// Video encoder, video decoder, text encoder, text decoder.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.video_encoder.param_slices_mut();
        out.extend(self.video_decoder.param_slices_mut());
        out.extend(self.text_encoder.param_slices_mut());
        out.extend(self.text_decoder.param_slices_mut());
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let ModelDims { c, d, z } = self.arch.dims;
        let header = ModelHeader {
            kind: ARTIFACT_KIND.into(),
            c,
            d,
            z,
            config_name: self.arch.config_name.clone(),
            seed: self.seed,
            arch: self.arch.clone(),
            networks: self.networks().iter().map(|n| n.spec().clone()).collect(),
            class_manifest: self.class_manifest.clone(),
        };
        container::encode(&header, &self.flat_params())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload): (ModelHeader, Vec<f64>) = container::decode(bytes)?;
        if header.kind != ARTIFACT_KIND {
            return Err(Error::invalid(format!(
                "artifact kind '{}' is not an autoencoder",
                header.kind
            )));
        }
        if header.networks.len() != 4 {
            return Err(Error::Parse {
                location: "model header".into(),
                message: format!("expected 4 networks, found {}", header.networks.len()),
            });
        }
        let total: usize = header.networks.iter().map(|s| s.param_count()).sum();
        ensure_dim("model parameter count", total, payload.len())?;
        let mut offset = 0;
        let mut nets = Vec::with_capacity(4);
        for spec in header.networks {
            let n = spec.param_count();
            nets.push(Mlp::from_flat(spec, &payload[offset..offset + n])?);
            offset += n;
        }
        let networks: [Mlp; 4] = nets.try_into().expect("four networks");
        let mut model = Self::from_networks(header.arch, header.seed, networks)?;
        model.class_manifest = header.class_manifest;
        model.set_mode(Mode::Eval);
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    /// Loads a model in Eval mode.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }
}
