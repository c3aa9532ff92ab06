//! The scene representation: an MLP mapping encoded position and view
//! direction to RGB color and volume density.
//!
//! NeRF-style trunk: `depth` ReLU layers of `width` units with one skip
//! connection re-injecting the encoded position, a linear density head
//! (made non-negative with ReLU at evaluation), and a color branch that
//! concatenates the encoded view direction before a hidden layer and a
//! sigmoid output.

use crate::autodiff::{Tape, Tensor, Var};
use crate::encoding::{encode_positional_on_tape, PositionalEncoding};
use crate::nn::{Binding, Linear, ParamSet};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FieldConfig {
    /// Trunk width; 128 by default, 64/256 for the capacity ablations.
    pub width: usize,
    pub depth: usize,
    /// Trunk layer index whose input is re-concatenated with the
    /// encoded position.
    pub skip_at: usize,
    pub pos_bands: usize,
    pub pos_sigma: f64,
    pub dir_bands: usize,
    pub dir_sigma: f64,
    pub include_input: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        // sigma = 2^m makes the frequency ladder sigma^(j/m) equal the
        // classic 2^j octaves.
        FieldConfig {
            width: 128,
            depth: 8,
            skip_at: 4,
            pos_bands: 10,
            pos_sigma: 1024.0,
            dir_bands: 4,
            dir_sigma: 16.0,
            include_input: true,
        }
    }
}

/// Scene MLP parameters plus the architecture wiring.
#[derive(Clone, Debug)]
pub struct RadianceField<T: Scalar> {
    pub cfg: FieldConfig,
    pub params: ParamSet<T>,
    trunk: Vec<Linear>,
    density_head: Linear,
    feature: Linear,
    color_hidden: Linear,
    color_out: Linear,
    pos_enc: PositionalEncoding,
    dir_enc: PositionalEncoding,
}

fn layer_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

impl<T: Scalar> RadianceField<T> {
    pub fn new(cfg: FieldConfig, seed: u64) -> Self {
        assert!(cfg.depth >= 2, "trunk needs at least 2 layers");
        assert!(
            cfg.skip_at > 0 && cfg.skip_at < cfg.depth,
            "skip connection must land inside the trunk"
        );
        let pos_enc = PositionalEncoding::new(cfg.pos_bands, cfg.pos_sigma, cfg.include_input);
        let dir_enc = PositionalEncoding::new(cfg.dir_bands, cfg.dir_sigma, cfg.include_input);
        let pos_dim = pos_enc.output_dim(3);
        let dir_dim = dir_enc.output_dim(3);
        let w = cfg.width;

        let mut params = ParamSet::new();
        let mut trunk = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            let in_dim = if i == 0 {
                pos_dim
            } else if i == cfg.skip_at {
                w + pos_dim
            } else {
                w
            };
            trunk.push(Linear::new(
                &mut params,
                &format!("trunk.{i}"),
                in_dim,
                w,
                layer_seed(seed, i as u64),
            ));
        }
        let density_head = Linear::new(&mut params, "density", w, 1, layer_seed(seed, 100));
        // Start the density slightly positive. The head is a single ReLU
        // unit; with a zero bias an unlucky draw leaves it negative at
        // every sample, the rendered color is identically background and
        // no gradient can ever revive it.
        params.set(density_head.b, Tensor::from_vec(vec![1], vec![T::of_f64(0.3)]));
        let feature = Linear::new(&mut params, "feature", w, w, layer_seed(seed, 101));
        let color_hidden = Linear::new(
            &mut params,
            "color_hidden",
            w + dir_dim,
            w / 2,
            layer_seed(seed, 102),
        );
        let color_out = Linear::new(&mut params, "color", w / 2, 3, layer_seed(seed, 103));

        RadianceField {
            cfg,
            params,
            trunk,
            density_head,
            feature,
            color_hidden,
            color_out,
            pos_enc,
            dir_enc,
        }
    }

    /// Forward pass over a batch of sample points and matching unit view
    /// directions, both `[n, 3]`. Returns (`density [n, 1]`, `rgb [n, 3]`)
    /// with density >= 0 and rgb in [0, 1].
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        binding: &Binding,
        points: Var,
        dirs: Var,
    ) -> (Var, Var) {
        let enc_pos = encode_positional_on_tape(tape, &self.pos_enc, points);
        let enc_dir = encode_positional_on_tape(tape, &self.dir_enc, dirs);

        let mut h = self.trunk[0].forward(tape, binding, enc_pos);
        h = tape.relu(h);
        for i in 1..self.trunk.len() {
            let input = if i == self.cfg.skip_at {
                tape.concat(&[h, enc_pos], 1)
            } else {
                h
            };
            h = self.trunk[i].forward(tape, binding, input);
            h = tape.relu(h);
        }

        let raw_density = self.density_head.forward(tape, binding, h);
        let density = tape.relu(raw_density);

        let feat = self.feature.forward(tape, binding, h);
        let color_in = tape.concat(&[feat, enc_dir], 1);
        let ch = self.color_hidden.forward(tape, binding, color_in);
        let ch = tape.relu(ch);
        let raw_color = self.color_out.forward(tape, binding, ch);
        let rgb = tape.sigmoid(raw_color);
        (density, rgb)
    }

    /// Non-differentiating convenience: evaluate the field at `points`
    /// with view `dirs` (flattened xyz triples).
    pub fn eval(&self, points: &[T], dirs: &[T]) -> (Vec<T>, Vec<T>) {
        assert_eq!(points.len(), dirs.len());
        assert_eq!(points.len() % 3, 0);
        let n = points.len() / 3;
        let mut tape = Tape::new();
        let binding = self.params.bind(&mut tape);
        let p = tape.constant(Tensor::from_vec(vec![n, 3], points.to_vec()));
        let d = tape.constant(Tensor::from_vec(vec![n, 3], dirs.to_vec()));
        let (density, rgb) = self.forward_on_tape(&mut tape, &binding, p, d);
        (tape.value(density).to_vec(), tape.value(rgb).to_vec())
    }
}
