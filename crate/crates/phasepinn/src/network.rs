//! Feed-forward fully connected networks: tanh hidden layers, linear output,
//! flat parameter views for the optimizers, and a bit-exact checkpoint format.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

/// Architecture description: `input_dim → [hidden_width] × hidden_layers → output_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_layers: usize, hidden_width: usize, output_dim: usize) -> Self {
        NetworkSpec { input_dim, hidden_layers, hidden_width, output_dim, activation: Activation::Tanh }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("hidden_layers", self.hidden_layers),
            ("hidden_width", self.hidden_width),
            ("output_dim", self.output_dim),
        ] {
            if v < 1 {
                return Err(Error::Precondition(format!("network {name} must be ≥ 1, got {v}")));
            }
        }
        Ok(())
    }

    /// Layer widths including input and output: [n₀, n₁, …, n_L].
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden_layers + 2);
        d.push(self.input_dim);
        d.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        d.push(self.output_dim);
        d
    }
}

/// One affine layer: `z = a · Wᵀ + b` with W of shape (n_out × n_in).
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Immutable-by-convention network value; optimizers produce new parameter
/// states through the flat views.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Affine>,
    activation: Activation,
}

impl Network {
    /// Glorot/Xavier-uniform weights with bound √(6/(n_in+n_out)), zero biases.
    /// Deterministic per seed.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = spec.dims();
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for win in dims.windows(2) {
            let (n_in, n_out) = (win[0], win[1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            let w = Array2::from_shape_fn((n_out, n_in), |_| rng.gen_range(-bound..bound));
            layers.push(Affine { w, b: Array1::zeros(n_out) });
        }
        Ok(Network { layers, activation: spec.activation })
    }

    /// Builds a network from explicit layers (for hand-constructed nets in
    /// tests and loaders); validates shape chaining and finiteness.
    pub fn from_layers(layers: Vec<Affine>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Precondition("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].w.ncols() != pair[0].w.nrows() {
                return Err(Error::Precondition(format!(
                    "layer shapes do not chain: {} outputs feed {} inputs",
                    pair[0].w.nrows(),
                    pair[1].w.ncols()
                )));
            }
        }
        for l in &layers {
            if l.b.len() != l.w.nrows() {
                return Err(Error::Precondition("bias length must equal weight rows".into()));
            }
            if l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numeric { point: None });
            }
        }
        Ok(Network { layers, activation })
    }

    pub fn layers(&self) -> &[Affine] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Canonical flat order: per layer, W row-major then b.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::InputShape { expected: self.param_count(), got: params.len() });
        }
        let mut off = 0;
        for l in &mut self.layers {
            for w in l.w.iter_mut() {
                *w = params[off];
                off += 1;
            }
            for b in l.b.iter_mut() {
                *b = params[off];
                off += 1;
            }
        }
        Ok(())
    }

    /// Single-point forward pass; hidden layers apply tanh, final layer is affine.
    pub fn forward(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.input_dim() {
            return Err(Error::InputShape { expected: self.input_dim(), got: point.len() });
        }
        let mut a: Vec<f64> = point.to_vec();
        let last = self.layers.len() - 1;
        for (idx, l) in self.layers.iter().enumerate() {
            let mut z: Vec<f64> = l.b.to_vec();
            for (r, zr) in z.iter_mut().enumerate() {
                for (c, &ac) in a.iter().enumerate() {
                    *zr += l.w[[r, c]] * ac;
                }
            }
            if idx < last {
                for v in z.iter_mut() {
                    *v = v.tanh();
                }
            }
            a = z;
        }
        Ok(a)
    }

    /// Batched values for (P × input_dim) points, returning (P × output_dim).
    pub fn forward_batch(&self, points: ArrayView2<f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.input_dim() {
            return Err(Error::InputShape { expected: self.input_dim(), got: points.ncols() });
        }
        let mut a = points.to_owned();
        let last = self.layers.len() - 1;
        for (idx, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.w.t());
            z += &l.b.view().insert_axis(Axis(0));
            if idx < last {
                z.mapv_inplace(f64::tanh);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dims: Vec<usize> = std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.w.nrows()))
            .collect();
        let header = CheckpointHeader {
            dims,
            activation: self.activation,
            param_count: self.param_count(),
        };
        let header_json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header_json.len() + 8 * header.param_count);
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_json);
        for v in self.params_flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = std::io::Cursor::new(bytes);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic).map_err(|_| Error::Format("checkpoint truncated".into()))?;
        if &magic != CKPT_MAGIC {
            return Err(Error::Format("not a network checkpoint (bad magic)".into()));
        }
        let mut len4 = [0u8; 4];
        cur.read_exact(&mut len4).map_err(|_| Error::Format("checkpoint truncated".into()))?;
        let hlen = u32::from_le_bytes(len4) as usize;
        let mut hjson = vec![0u8; hlen];
        cur.read_exact(&mut hjson).map_err(|_| Error::Format("checkpoint truncated".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&hjson)
            .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;
        if header.dims.len() < 2 {
            return Err(Error::Format("checkpoint needs ≥ 2 layer dims".into()));
        }
        let expect: usize = header.dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        if expect != header.param_count {
            return Err(Error::Format("checkpoint param count disagrees with dims".into()));
        }
        let mut params = vec![0.0f64; expect];
        for p in params.iter_mut() {
            let mut b8 = [0u8; 8];
            cur.read_exact(&mut b8).map_err(|_| Error::Format("checkpoint truncated".into()))?;
            *p = f64::from_le_bytes(b8);
        }
        let mut trailing = Vec::new();
        cur.read_to_end(&mut trailing).ok();
        if !trailing.is_empty() {
            return Err(Error::Format("trailing bytes after checkpoint payload".into()));
        }
        let mut layers = Vec::with_capacity(header.dims.len() - 1);
        let mut off = 0;
        for win in header.dims.windows(2) {
            let (n_in, n_out) = (win[0], win[1]);
            let w = Array2::from_shape_vec((n_out, n_in), params[off..off + n_out * n_in].to_vec())
                .expect("shape fits by construction");
            off += n_out * n_in;
            let b = Array1::from_vec(params[off..off + n_out].to_vec());
            off += n_out;
            layers.push(Affine { w, b });
        }
        Self::from_layers(layers, header.activation)
    }
}

const CKPT_MAGIC: &[u8; 8] = b"PFCKPT1\n";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    dims: Vec<usize>,
    activation: Activation,
    param_count: usize,
}

/// Writes a checkpoint via a temp file in the same directory (no torn files).
pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&net.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spec_2_4x128_1() -> NetworkSpec {
        NetworkSpec::new(2, 4, 128, 1)
    }

    #[test]
    fn param_count_matches_shape_arithmetic() {
        let net = Network::init(&spec_2_4x128_1(), 0).unwrap();
        let expect = 2 * 128 + 128 + 3 * (128 * 128 + 128) + 128 + 1;
        assert_eq!(net.param_count(), expect);
        assert_eq!(expect, 50_049);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = Network::init(&spec_2_4x128_1(), 9).unwrap();
        let b = Network::init(&spec_2_4x128_1(), 9).unwrap();
        assert_eq!(a.params_flat(), b.params_flat());
        let c = Network::init(&spec_2_4x128_1(), 10).unwrap();
        assert_ne!(a.params_flat(), c.params_flat());
        // Biases start at zero; weights respect the Glorot bound.
        let bound01 = (6.0f64 / (2.0 + 128.0)).sqrt();
        for (l, layer) in a.layers().iter().enumerate() {
            assert!(layer.b.iter().all(|&v| v == 0.0));
            if l == 0 {
                assert!(layer.w.iter().all(|&v| v.abs() < bound01));
            }
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = Network::init(&NetworkSpec::new(2, 2, 8, 1), 1).unwrap();
        let zeros = vec![0.0; net.param_count()];
        net.set_params_flat(&zeros).unwrap();
        assert_eq!(net.forward(&[0.3, -0.7]).unwrap(), vec![0.0]);
    }

    #[test]
    fn single_neuron_realizes_tanh() {
        // u(x,t) = tanh(x): hidden neuron passes x through, output is identity.
        let net = Network::from_layers(
            vec![
                Affine { w: array![[1.0, 0.0]], b: array![0.0] },
                Affine { w: array![[1.0]], b: array![0.0] },
            ],
            Activation::Tanh,
        )
        .unwrap();
        let got = net.forward(&[0.5, 0.9]).unwrap()[0];
        assert!((got - 0.5f64.tanh()).abs() < 1e-12);
        assert!((got - 0.462117).abs() < 1e-6);
    }

    #[test]
    fn forward_matches_hand_rolled_single_hidden_layer() {
        let w1 = array![[0.3, -0.2], [0.5, 0.7], [-0.1, 0.4]];
        let b1 = array![0.1, -0.2, 0.3];
        let w2 = array![[1.5, -0.5, 0.25]];
        let b2 = array![0.05];
        let net = Network::from_layers(
            vec![Affine { w: w1.clone(), b: b1.clone() }, Affine { w: w2.clone(), b: b2.clone() }],
            Activation::Tanh,
        )
        .unwrap();
        let p = [0.37, -0.81];
        let mut hand = 0.0;
        for r in 0..3 {
            let z = w1[[r, 0]] * p[0] + w1[[r, 1]] * p[1] + b1[r];
            hand += w2[[0, r]] * z.tanh();
        }
        hand += b2[0];
        let got = net.forward(&p).unwrap()[0];
        assert!((got - hand).abs() <= 1e-14);
    }

    #[test]
    fn output_bounded_by_final_layer_for_tanh_hidden() {
        let net = Network::init(&NetworkSpec::new(2, 3, 16, 1), 4).unwrap();
        let last = net.layers().last().unwrap();
        let bound: f64 = last.b[0].abs() + last.w.iter().map(|v| v.abs()).sum::<f64>();
        for p in [[-1.0, 0.0], [0.5, 1.0], [3.0, -2.0], [100.0, 100.0]] {
            assert!(net.forward(&p).unwrap()[0].abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn continuity_smoke() {
        let net = Network::init(&NetworkSpec::new(2, 2, 32, 1), 12).unwrap();
        let a = net.forward(&[0.2, 0.4]).unwrap()[0];
        let b = net.forward(&[0.2 + 1e-8, 0.4]).unwrap()[0];
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = Network::init(&NetworkSpec::new(2, 1, 4, 1), 0).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::InputShape { expected: 2, got: 1 })));
    }

    #[test]
    fn forward_batch_matches_single() {
        let net = Network::init(&NetworkSpec::new(3, 2, 16, 2), 5).unwrap();
        let pts = array![[0.1, 0.2, 0.3], [-0.5, 0.9, 0.0], [1.0, -1.0, 0.5]];
        let batch = net.forward_batch(pts.view()).unwrap();
        for (i, row) in pts.rows().into_iter().enumerate() {
            let single = net.forward(row.as_slice().unwrap()).unwrap();
            for o in 0..2 {
                assert!((batch[[i, o]] - single[o]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn flat_params_roundtrip() {
        let mut net = Network::init(&NetworkSpec::new(2, 2, 8, 1), 2).unwrap();
        let mut p = net.params_flat();
        p[3] = 42.0;
        net.set_params_flat(&p).unwrap();
        assert_eq!(net.params_flat(), p);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = Network::init(&NetworkSpec::new(2, 3, 24, 2), 77).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let back = Network::load(&path).unwrap();
        let a = net.params_flat();
        let b = back.params_flat();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(back.input_dim(), 2);
        assert_eq!(back.output_dim(), 2);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(Network::from_bytes(b"not a checkpoint").is_err());
        let net = Network::init(&NetworkSpec::new(2, 1, 4, 1), 0).unwrap();
        let mut bytes = net.to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(Network::from_bytes(&bytes).is_err());
        let mut extra = net.to_bytes();
        extra.extend_from_slice(&[0u8; 4]);
        assert!(Network::from_bytes(&extra).is_err());
    }

    #[test]
    fn spec_validation_rejects_zero_counts() {
        assert!(NetworkSpec::new(0, 1, 4, 1).validate().is_err());
        assert!(NetworkSpec::new(2, 0, 4, 1).validate().is_err());
        assert!(NetworkSpec::new(2, 1, 0, 1).validate().is_err());
        assert!(NetworkSpec::new(2, 1, 4, 0).validate().is_err());
        assert!(NetworkSpec::new(2, 1, 4, 1).validate().is_ok());
    }
}
