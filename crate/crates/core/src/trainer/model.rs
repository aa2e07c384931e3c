use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::format::{read_embedding_file, write_embedding_file, write_json};
use crate::error::{Result, TrustError};
use crate::numerics::{Graph, Matrix, NodeId};
use crate::seed::{rng_for, stream};

pub const CHECKPOINT_MANIFEST: &str = "model.json";
const PARAM_NAMES: [&str; 6] = ["f_w1", "f_b1", "f_w2", "f_b2", "h_w", "h_b"];

/// Feature extractor `f(x) = tanh(x W1 + b1) W2 + b2` and linear
/// classifier `h(z) = z Wh + bh`.
#[derive(Clone, Debug, PartialEq)]
pub struct VisionModel {
    params: [Matrix; 6],
}

/// Parameter node ids of a model recorded on a graph.
#[derive(Clone, Copy, Debug)]
pub struct BoundModel {
    ids: [NodeId; 6],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub feature: usize,
    pub classes: usize,
}

impl VisionModel {
    /// Gaussian weights with variance 1/fan_in, zero biases.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[stream::MODEL_INIT]);
        let mut gauss = |rows: usize, cols: usize| {
            let std = 1.0 / (rows as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    z * std
                })
                .collect();
            Matrix::new(rows, cols, data).expect("finite draws")
        };
        let w1 = gauss(dims.input, dims.hidden);
        let w2 = gauss(dims.hidden, dims.feature);
        let wh = gauss(dims.feature, dims.classes);
        VisionModel {
            params: [
                w1,
                Matrix::zeros(1, dims.hidden),
                w2,
                Matrix::zeros(1, dims.feature),
                wh,
                Matrix::zeros(1, dims.classes),
            ],
        }
    }

    pub fn from_params(params: Vec<Matrix>) -> Result<Self> {
        let params: [Matrix; 6] = params
            .try_into()
            .map_err(|v: Vec<Matrix>| TrustError::InvalidArgument(format!("expected 6 parameter matrices, got {}", v.len())))?;
        let [w1, b1, w2, b2, wh, bh] = &params;
        let ok = b1.shape() == (1, w1.cols())
            && w2.rows() == w1.cols()
            && b2.shape() == (1, w2.cols())
            && wh.rows() == w2.cols()
            && bh.shape() == (1, wh.cols());
        if !ok {
            return Err(TrustError::shape("vision_model", "inconsistent parameter shapes"));
        }
        Ok(VisionModel { params })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input: self.params[0].rows(),
            hidden: self.params[0].cols(),
            feature: self.params[2].cols(),
            classes: self.params[4].cols(),
        }
    }

    pub fn params(&self) -> &[Matrix; 6] {
        &self.params
    }

    /// Records every parameter as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph) -> BoundModel {
        BoundModel {
            ids: self.params.clone().map(|p| g.param(p)),
        }
    }

    /// Plain SGD step.
    pub fn sgd_step(&mut self, grads: &[Matrix; 6], lr: f64) -> Result<()> {
        for (p, g) in self.params.iter_mut().zip(grads) {
            let updated = p.sub(&g.scale(lr))?;
            updated.ensure_finite("sgd_step")?;
            *p = updated;
        }
        Ok(())
    }

    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        let [w1, b1, w2, b2, ..] = &self.params;
        x.matmul(w1)?.add_row(b1)?.map(f64::tanh).matmul(w2)?.add_row(b2)
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let [.., wh, bh] = &self.params;
        self.features(x)?.matmul(wh)?.add_row(bh)
    }

    /// Argmax class per row, ties to the smallest id.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        if x.cols() != self.dims().input {
            return Err(TrustError::shape(
                "predict",
                format!("input width {} vs model input {}", x.cols(), self.dims().input),
            ));
        }
        Ok(self.logits(x)?.row_argmax())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| TrustError::io(dir, e))?;
        for (name, p) in PARAM_NAMES.iter().zip(&self.params) {
            write_embedding_file(&dir.join(format!("{name}.emb")), p)?;
        }
        let manifest = CheckpointManifest {
            format_version: 1,
            kind: "vision_model".into(),
            dims: self.dims(),
            files: PARAM_NAMES.iter().map(|n| format!("{n}.emb")).collect(),
        };
        write_json(&dir.join(CHECKPOINT_MANIFEST), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CHECKPOINT_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| TrustError::io(&path, e))?;
        let manifest: CheckpointManifest = serde_json::from_str(&text)
            .map_err(|e| TrustError::format(&path, None, format!("invalid checkpoint manifest: {e}")))?;
        if manifest.format_version != 1 || manifest.kind != "vision_model" || manifest.files.len() != 6 {
            return Err(TrustError::format(&path, None, "unsupported checkpoint manifest"));
        }
        let params = manifest
            .files
            .iter()
            .map(|f| read_embedding_file(&dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        let model = VisionModel::from_params(params)?;
        if model.dims() != manifest.dims {
            return Err(TrustError::format(&path, None, "parameter shapes disagree with manifest dims"));
        }
        Ok(model)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    format_version: u32,
    kind: String,
    dims: ModelDims,
    files: Vec<String>,
}

impl BoundModel {
    /// Wraps parameter nodes already on a graph, in the order of
    /// [`VisionModel::params`]. Shapes are checked when the nodes are used.
    pub fn from_ids(ids: [NodeId; 6]) -> Self {
        BoundModel { ids }
    }

    pub fn ids(&self) -> &[NodeId; 6] {
        &self.ids
    }

    /// `f(x)` for an input node of shape B × D_img.
    pub fn features(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let [w1, b1, w2, b2, ..] = self.ids;
        let a = g.matmul(x, w1)?;
        let a = g.add_row(a, b1)?;
        let h = g.tanh(a)?;
        let z = g.matmul(h, w2)?;
        g.add_row(z, b2)
    }

    /// `h(z)` for a feature node of shape B × P.
    pub fn classify(&self, g: &mut Graph, z: NodeId) -> Result<NodeId> {
        let [.., wh, bh] = self.ids;
        let l = g.matmul(z, wh)?;
        g.add_row(l, bh)
    }

    /// Gradients for every parameter, zero where the loss does not depend on it.
    pub fn gradients(&self, g: &Graph, grads: &crate::numerics::Gradients) -> [Matrix; 6] {
        self.ids.map(|id| {
            let (r, c) = g.value(id).shape();
            grads.get_or_zeros(id, r, c)
        })
    }
}
