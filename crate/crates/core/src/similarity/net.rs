//! Siamese convolutional network over character sequences.
//!
//! Encoder: character embedding (lookup + ReLU), parallel conv banks each
//! followed by global max pooling. Comparison: absolute difference of the two
//! encoder outputs, a stack of ReLU dense layers with dropout, and a 2-way
//! softmax head whose first component is the similarity.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CharVocab, SimilarityModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchShape {
    pub embed_dim: usize,
    /// (kernel size, filter count) per conv bank.
    pub conv: Vec<(usize, usize)>,
    pub dense_widths: Vec<usize>,
    pub dropout: f64,
}

impl ArchShape {
    /// Full-size architecture: d=5, 700 filters at k=8 plus 500 at k=4,
    /// four dense layers of 500.
    pub fn paper() -> ArchShape {
        ArchShape {
            embed_dim: 5,
            conv: vec![(8, 700), (4, 500)],
            dense_widths: vec![500; 4],
            dropout: 0.3,
        }
    }

    /// Reduced preset for laptop-scale experiments.
    pub fn desk() -> ArchShape {
        ArchShape {
            embed_dim: 5,
            conv: vec![(8, 96), (4, 64)],
            dense_widths: vec![96; 4],
            dropout: 0.3,
        }
    }

    /// Minimal shape used by the finite-difference gradient check.
    pub fn tiny() -> ArchShape {
        ArchShape {
            embed_dim: 2,
            conv: vec![(8, 4), (4, 3)],
            dense_widths: vec![8, 8],
            dropout: 0.0,
        }
    }

    pub fn encoder_dim(&self) -> usize {
        self.conv.iter().map(|&(_, n)| n).sum()
    }

    pub fn max_kernel(&self) -> usize {
        self.conv.iter().map(|&(k, _)| k).max().unwrap_or(1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernel: usize,
    /// filters x (kernel * embed_dim)
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    /// out x in
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiameseNet {
    pub shape: ArchShape,
    pub vocab: CharVocab,
    /// vocab.len() x embed_dim; row 0 is the unknown character.
    pub embedding: Array2<f64>,
    pub convs: Vec<ConvLayer>,
    pub dense: Vec<DenseLayer>,
    pub output: DenseLayer,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
}

impl SiameseNet {
    pub fn init(shape: ArchShape, vocab: CharVocab, seed: u64) -> SiameseNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = shape.embed_dim;
        let embedding = Array2::from_shape_fn((vocab.len(), d), |_| rng.gen_range(-0.5..0.5));
        let convs = shape
            .conv
            .iter()
            .map(|&(k, n)| ConvLayer {
                kernel: k,
                w: glorot(&mut rng, n, k * d, k * d, n),
                // Small positive bias keeps freshly initialised filters on the
                // live side of the ReLU, even for windows the embedding ReLU
                // has zeroed out entirely.
                b: Array1::from_elem(n, 0.01),
            })
            .collect();
        let mut dense = Vec::new();
        let mut prev = shape.encoder_dim();
        for &w in &shape.dense_widths {
            dense.push(DenseLayer { w: glorot(&mut rng, w, prev, prev, w), b: Array1::zeros(w) });
            prev = w;
        }
        let output = DenseLayer { w: glorot(&mut rng, 2, prev, prev, 2), b: Array1::zeros(2) };
        SiameseNet { shape, vocab, embedding, convs, dense, output }
    }

    /// Encode one text into the concatenated global-max-pooled feature vector.
    pub fn encode(&self, text: &str) -> Result<(Array1<f64>, EncodeCache)> {
        let idx = self.vocab.encode(text);
        let len = idx.len();
        let max_k = self.shape.max_kernel();
        if len < max_k {
            return Err(Error::Data(format!(
                "text of {len} chars is shorter than the largest kernel ({max_k})"
            )));
        }
        let d = self.shape.embed_dim;
        // Embedding lookup with ReLU.
        let mut x = Array2::zeros((len, d));
        for (i, &c) in idx.iter().enumerate() {
            for j in 0..d {
                x[[i, j]] = self.embedding[[c, j]].max(0.0);
            }
        }
        let mut features = Array1::zeros(self.shape.encoder_dim());
        let mut banks = Vec::with_capacity(self.convs.len());
        let mut offset = 0;
        for conv in &self.convs {
            let k = conv.kernel;
            let n = conv.w.nrows();
            let windows = len - k + 1;
            // im2col: each row is a flattened k x d window of x.
            let mut cols = Array2::zeros((windows, k * d));
            for i in 0..windows {
                for j in 0..k {
                    for c in 0..d {
                        cols[[i, j * d + c]] = x[[i + j, c]];
                    }
                }
            }
            let z = cols.dot(&conv.w.t()); // windows x n
            let mut argmax = vec![0usize; n];
            let mut z_max = vec![f64::NEG_INFINITY; n];
            for f in 0..n {
                for i in 0..windows {
                    let v = z[[i, f]] + conv.b[f];
                    if v > z_max[f] {
                        z_max[f] = v;
                        argmax[f] = i;
                    }
                }
                features[offset + f] = z_max[f].max(0.0);
            }
            banks.push(BankCache { argmax, z_max });
            offset += n;
        }
        Ok((features, EncodeCache { idx, x, banks }))
    }

    /// Full forward pass over a pair. `dropout_rng` enables training-mode
    /// dropout; inference is deterministic.
    pub fn forward_pair(
        &self,
        t1: &str,
        t2: &str,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<PairCache> {
        let (e1, enc1) = self.encode(t1)?;
        let (e2, enc2) = self.encode(t2)?;
        let merge = (&e1 - &e2).mapv(f64::abs);
        let sign = (&e1 - &e2).mapv(f64::signum);

        let mut dense_inputs = Vec::with_capacity(self.dense.len());
        let mut relu_masks = Vec::with_capacity(self.dense.len());
        let mut drop_masks = Vec::with_capacity(self.dense.len());
        let mut a = merge.clone();
        for layer in &self.dense {
            dense_inputs.push(a.clone());
            let z = layer.w.dot(&a) + &layer.b;
            let mask = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            a = z.mapv(|v| v.max(0.0));
            let drop = match dropout_rng.as_deref_mut() {
                Some(rng) if self.shape.dropout > 0.0 => {
                    let keep = 1.0 - self.shape.dropout;
                    let m = Array1::from_shape_fn(a.len(), |_| {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    a = &a * &m;
                    Some(m)
                }
                _ => None,
            };
            relu_masks.push(mask);
            drop_masks.push(drop);
        }
        let logits = self.output.w.dot(&a) + &self.output.b;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp = logits.mapv(|v| (v - max).exp());
        let probs = &exp / exp.sum();
        Ok(PairCache {
            enc1,
            e1,
            enc2,
            e2,
            sign,
            dense_inputs,
            relu_masks,
            drop_masks,
            hidden_out: a,
            probs,
        })
    }

    /// Cross-entropy of a forward pass against a same-author label.
    pub fn loss(cache: &PairCache, label: bool) -> f64 {
        let p = if label { cache.probs[0] } else { cache.probs[1] };
        -p.max(1e-300).ln()
    }

    /// Accumulate gradients of the cross-entropy loss into `grads`.
    pub fn backward_pair(&self, cache: &PairCache, label: bool, grads: &mut Gradients) {
        let y = if label { [1.0, 0.0] } else { [0.0, 1.0] };
        let dlogits = Array1::from_vec(vec![cache.probs[0] - y[0], cache.probs[1] - y[1]]);

        // Output head.
        for r in 0..2 {
            for c in 0..cache.hidden_out.len() {
                grads.output.w[[r, c]] += dlogits[r] * cache.hidden_out[c];
            }
            grads.output.b[r] += dlogits[r];
        }
        let mut da = self.output.w.t().dot(&dlogits);

        // Dense stack, reversed.
        for i in (0..self.dense.len()).rev() {
            if let Some(m) = &cache.drop_masks[i] {
                da = &da * m;
            }
            let dz = &da * &cache.relu_masks[i];
            let input = &cache.dense_inputs[i];
            let g = &mut grads.dense[i];
            for r in 0..dz.len() {
                if dz[r] != 0.0 {
                    for c in 0..input.len() {
                        g.w[[r, c]] += dz[r] * input[c];
                    }
                    g.b[r] += dz[r];
                }
            }
            da = self.dense[i].w.t().dot(&dz);
        }

        // Merge: m = |e1 - e2|.
        let de1 = &da * &cache.sign;
        let de2 = de1.mapv(|v| -v);
        self.backward_encoder(&cache.enc1, &de1, grads);
        self.backward_encoder(&cache.enc2, &de2, grads);
    }

    fn backward_encoder(&self, cache: &EncodeCache, de: &Array1<f64>, grads: &mut Gradients) {
        let d = self.shape.embed_dim;
        let len = cache.idx.len();
        let mut dx = Array2::<f64>::zeros((len, d));
        let mut offset = 0;
        for (bi, (bank, conv)) in cache.banks.iter().zip(&self.convs).enumerate() {
            let k = conv.kernel;
            for f in 0..conv.w.nrows() {
                let g = de[offset + f];
                // ReLU after conv: only positive pooled pre-activations pass.
                if g == 0.0 || bank.z_max[f] <= 0.0 {
                    continue;
                }
                let pos = bank.argmax[f];
                let gw = &mut grads.convs[bi];
                for j in 0..k {
                    for c in 0..d {
                        gw.w[[f, j * d + c]] += g * cache.x[[pos + j, c]];
                        dx[[pos + j, c]] += g * conv.w[[f, j * d + c]];
                    }
                }
                gw.b[f] += g;
            }
            offset += conv.w.nrows();
        }
        // Embedding lookup with ReLU: pass where the raw embedding is positive.
        for (i, &ci) in cache.idx.iter().enumerate() {
            for c in 0..d {
                if self.embedding[[ci, c]] > 0.0 {
                    grads.embedding[[ci, c]] += dx[[i, c]];
                }
            }
        }
    }

    /// Flat views of every parameter group, in a fixed order matching
    /// [`Gradients::groups`].
    pub fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embedding.as_slice_mut().unwrap()];
        for c in &mut self.convs {
            out.push(c.w.as_slice_mut().unwrap());
            out.push(c.b.as_slice_mut().unwrap());
        }
        for l in &mut self.dense {
            out.push(l.w.as_slice_mut().unwrap());
            out.push(l.b.as_slice_mut().unwrap());
        }
        out.push(self.output.w.as_slice_mut().unwrap());
        out.push(self.output.b.as_slice_mut().unwrap());
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let ckpt = Checkpoint { version: CHECKPOINT_VERSION.to_string(), net: self.clone() };
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, &ckpt).map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<SiameseNet> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let ckpt: Checkpoint =
            serde_json::from_reader(file).map_err(|e| Error::Data(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "checkpoint version {} does not match expected {CHECKPOINT_VERSION}",
                ckpt.version
            )));
        }
        let mut net = ckpt.net;
        net.vocab.rebuild_index();
        Ok(net)
    }
}

impl SimilarityModel for SiameseNet {
    fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.forward_pair(a, b, None)?.probs[0])
    }
}

pub const CHECKPOINT_VERSION: &str = "styledev-model-v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: String,
    net: SiameseNet,
}

#[derive(Debug, Clone)]
pub struct BankCache {
    pub argmax: Vec<usize>,
    pub z_max: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EncodeCache {
    pub idx: Vec<usize>,
    /// Post-ReLU embedded sequence, len x embed_dim.
    pub x: Array2<f64>,
    pub banks: Vec<BankCache>,
}

#[derive(Debug, Clone)]
pub struct PairCache {
    pub enc1: EncodeCache,
    pub e1: Array1<f64>,
    pub enc2: EncodeCache,
    pub e2: Array1<f64>,
    pub sign: Array1<f64>,
    pub dense_inputs: Vec<Array1<f64>>,
    pub relu_masks: Vec<Array1<f64>>,
    pub drop_masks: Vec<Option<Array1<f64>>>,
    pub hidden_out: Array1<f64>,
    pub probs: Array1<f64>,
}

/// Parameter gradients with the same shapes as the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embedding: Array2<f64>,
    pub convs: Vec<DenseLayer>,
    pub dense: Vec<DenseLayer>,
    pub output: DenseLayer,
}

impl Gradients {
    pub fn zeros_like(net: &SiameseNet) -> Gradients {
        Gradients {
            embedding: Array2::zeros(net.embedding.raw_dim()),
            convs: net
                .convs
                .iter()
                .map(|c| DenseLayer { w: Array2::zeros(c.w.raw_dim()), b: Array1::zeros(c.b.len()) })
                .collect(),
            dense: net
                .dense
                .iter()
                .map(|l| DenseLayer { w: Array2::zeros(l.w.raw_dim()), b: Array1::zeros(l.b.len()) })
                .collect(),
            output: DenseLayer {
                w: Array2::zeros(net.output.w.raw_dim()),
                b: Array1::zeros(net.output.b.len()),
            },
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.groups_mut() {
            for v in g {
                *v *= factor;
            }
        }
    }

    pub fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embedding.as_slice_mut().unwrap()];
        for c in &mut self.convs {
            out.push(c.w.as_slice_mut().unwrap());
            out.push(c.b.as_slice_mut().unwrap());
        }
        for l in &mut self.dense {
            out.push(l.w.as_slice_mut().unwrap());
            out.push(l.b.as_slice_mut().unwrap());
        }
        out.push(self.output.w.as_slice_mut().unwrap());
        out.push(self.output.b.as_slice_mut().unwrap());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_net() -> SiameseNet {
        let vocab = CharVocab::new("abcdefghij ".chars().collect());
        SiameseNet::init(ArchShape::tiny(), vocab, 42)
    }

    #[test]
    fn encoder_output_length_matches_filter_counts() {
        let net = tiny_net();
        let (e, _) = net.encode("abcdefghij abc").unwrap();
        assert_eq!(e.len(), 4 + 3);
        let paper = ArchShape::paper();
        assert_eq!(paper.encoder_dim(), 1200);
    }

    #[test]
    fn encode_deterministic() {
        let net = tiny_net();
        let (e1, _) = net.encode("abcdefghij").unwrap();
        let (e2, _) = net.encode("abcdefghij").unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn short_text_errors() {
        let net = tiny_net();
        assert!(net.encode("abc").is_err());
    }

    #[test]
    fn unknown_chars_are_handled() {
        let net = tiny_net();
        assert!(net.encode("xyzXYZ!!123?").is_ok());
    }

    #[test]
    fn self_similarity_constant_across_texts() {
        let net = tiny_net();
        let s1 = net.similarity("abcdefghij", "abcdefghij").unwrap();
        let s2 = net.similarity("jihgfedcba", "jihgfedcba").unwrap();
        assert_eq!(s1.to_bits(), s2.to_bits());
    }

    #[test]
    fn symmetry_bit_exact() {
        let net = tiny_net();
        let a = "abcdefghij abc";
        let b = "jjficedab adeg";
        let ab = net.similarity(a, b).unwrap();
        let ba = net.similarity(b, a).unwrap();
        assert_eq!(ab.to_bits(), ba.to_bits());
    }

    #[test]
    fn softmax_sums_to_one() {
        let net = tiny_net();
        let cache = net.forward_pair("abcdefghij", "jihgfedcba", None).unwrap();
        assert!((cache.probs.sum() - 1.0).abs() < 1e-6);
        assert!(cache.probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn checkpoint_roundtrip_and_version_gate() {
        let net = tiny_net();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        net.save(&path).unwrap();
        let back = SiameseNet::load(&path).unwrap();
        let a = "abcdefghij abc";
        let b = "jjficedab adeg";
        assert_eq!(
            net.similarity(a, b).unwrap().to_bits(),
            back.similarity(a, b).unwrap().to_bits()
        );

        // Corrupt the version tag.
        let text = std::fs::read_to_string(&path).unwrap();
        let text = text.replace(CHECKPOINT_VERSION, "styledev-model-v0");
        std::fs::write(&path, text).unwrap();
        assert!(SiameseNet::load(&path).is_err());
    }
}
