//! C ABI over `trust-core`.
//!
//! Conventions:
//! - Every fallible function returns a [`TrustStatus`]; results go through
//!   out-pointers that are written only on success.
//! - Datasets and models are opaque handles owned by the caller and released
//!   with the matching `*_free` function. Freeing NULL is a no-op.
//! - On failure, [`trust_last_error_message`] returns a description of the
//!   most recent error on the calling thread.
//! - Matrices are row-major `double` buffers.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use trust_core::contrastive::{hard_contrastive_loss, soft_contrastive_loss, CaptionSimilarity, ContrastiveBatch};
use trust_core::data::{gen_synthetic, load_dataset, save_dataset, validate_dataset_dir, EmbeddingDataset, SynthConfig};
use trust_core::numerics::{Graph, Matrix};
use trust_core::trainer::{evaluate, run_pipeline, LossToggles, TrainConfig, VisionModel};
use trust_core::uncertainty::{reliability_weights, score_dataset, SimilarityMatrix};
use trust_core::TrustError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrustStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Format = 4,
    Io = 5,
    MissingLabels = 6,
    Degenerate = 7,
    Diverged = 8,
    Config = 9,
    NonFinite = 10,
    Panic = 11,
}

impl From<&TrustError> for TrustStatus {
    fn from(e: &TrustError) -> Self {
        match e {
            TrustError::Shape { .. } => TrustStatus::Shape,
            TrustError::NonFinite { .. } => TrustStatus::NonFinite,
            TrustError::InvalidArgument(_) => TrustStatus::InvalidArgument,
            TrustError::Config(_) => TrustStatus::Config,
            TrustError::Format { .. } | TrustError::Json(_) => TrustStatus::Format,
            TrustError::MissingLabels => TrustStatus::MissingLabels,
            TrustError::Degenerate(_) => TrustStatus::Degenerate,
            TrustError::Diverged { .. } => TrustStatus::Diverged,
            TrustError::Io { .. } => TrustStatus::Io,
        }
    }
}

/// Opaque dataset handle.
pub struct TrustDataset(EmbeddingDataset);

/// Opaque trained-model handle.
pub struct TrustModel(VisionModel);

/// Training settings. Obtain defaults from [`trust_train_config_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct TrustTrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub tau: f64,
    pub gamma: f64,
    pub scoring_batch_size: usize,
    pub seed: u64,
    pub use_soft_ctr: bool,
    pub use_hard_ctr: bool,
    pub use_uncertainty: bool,
}

impl TrustTrainConfig {
    fn resolve(&self) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.batch_size = self.batch_size;
        cfg.epochs = self.epochs;
        cfg.lr = self.lr;
        cfg.tau = self.tau;
        cfg.gamma = self.gamma;
        cfg.scoring_batch_size = self.scoring_batch_size;
        cfg.seed = self.seed;
        cfg.text_classifier.seed = self.seed;
        cfg.toggles = LossToggles {
            use_soft_ctr: self.use_soft_ctr,
            use_hard_ctr: self.use_hard_ctr,
            use_uncertainty: self.use_uncertainty,
        };
        cfg
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

enum Failure {
    Null(&'static str),
    Arg(String),
    Core(TrustError),
}

impl From<TrustError> for Failure {
    fn from(e: TrustError) -> Self {
        Failure::Core(e)
    }
}

/// Runs `body`, converting errors and panics into a status plus message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> TrustStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            TrustStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("{what} is NULL"));
            TrustStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_last_error(&msg);
            TrustStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(&e.to_string());
            TrustStatus::from(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            TrustStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn matrix_arg(p: *const f64, rows: usize, cols: usize, what: &'static str) -> Result<Matrix, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure::Arg(format!("{what} dimensions overflow")))?;
    let data = std::slice::from_raw_parts(p, len).to_vec();
    Ok(Matrix::new(rows, cols, data)?)
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn trust_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn trust_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Checks a dataset directory without keeping it.
#[no_mangle]
pub unsafe extern "C" fn trust_dataset_validate(dir: *const c_char) -> TrustStatus {
    guard(|| {
        validate_dataset_dir(&path_arg(dir, "dir")?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn trust_dataset_load(dir: *const c_char, out: *mut *mut TrustDataset) -> TrustStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ds = load_dataset(&path_arg(dir, "dir")?)?;
        *out = Box::into_raw(Box::new(TrustDataset(ds)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn trust_dataset_save(ds: *const TrustDataset, dir: *const c_char) -> TrustStatus {
    guard(|| {
        let ds = ref_arg(ds, "dataset")?;
        save_dataset(&ds.0, &path_arg(dir, "dir")?)?;
        Ok(())
    })
}

/// Synthetic source/target pair; unspecified generator settings use their defaults.
#[no_mangle]
pub unsafe extern "C" fn trust_gen_synthetic(
    classes: usize,
    n_per_class: usize,
    rho: f64,
    seed: u64,
    out_source: *mut *mut TrustDataset,
    out_target: *mut *mut TrustDataset,
) -> TrustStatus {
    guard(|| {
        let out_source = out_arg(out_source, "out_source")?;
        let out_target = out_arg(out_target, "out_target")?;
        let cfg = SynthConfig {
            classes,
            n_per_class,
            rho,
            seed,
            ..SynthConfig::default()
        };
        let (s, t) = gen_synthetic(&cfg)?;
        *out_source = Box::into_raw(Box::new(TrustDataset(s)));
        *out_target = Box::into_raw(Box::new(TrustDataset(t)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn trust_dataset_len(ds: *const TrustDataset, out: *mut usize) -> TrustStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(ds, "dataset")?.0.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn trust_dataset_num_classes(ds: *const TrustDataset, out: *mut usize) -> TrustStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(ds, "dataset")?.0.num_classes();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn trust_dataset_free(ds: *mut TrustDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Row-softmax diagonal of a `b × b` similarity matrix into `out_w[0..b]`.
#[no_mangle]
pub unsafe extern "C" fn trust_reliability_weights(sim: *const f64, b: usize, out_w: *mut f64) -> TrustStatus {
    guard(|| {
        let s = SimilarityMatrix::from_matrix(matrix_arg(sim, b, b, "sim")?)?;
        if out_w.is_null() {
            return Err(Failure::Null("out_w"));
        }
        std::slice::from_raw_parts_mut(out_w, b).copy_from_slice(&reliability_weights(&s));
        Ok(())
    })
}

/// Reliability weight of every sample of `target`; `out_w` must hold `len` values
/// where `len` equals the dataset size.
#[no_mangle]
pub unsafe extern "C" fn trust_score_dataset(
    target: *const TrustDataset,
    scoring_batch_size: usize,
    gamma: f64,
    seed: u64,
    out_w: *mut f64,
    len: usize,
) -> TrustStatus {
    guard(|| {
        let ds = &ref_arg(target, "target")?.0;
        if out_w.is_null() {
            return Err(Failure::Null("out_w"));
        }
        if len != ds.len() {
            return Err(Failure::Arg(format!("output holds {len} values, dataset has {}", ds.len())));
        }
        let w = score_dataset(ds.unlabeled(), scoring_batch_size, gamma, seed)?;
        std::slice::from_raw_parts_mut(out_w, len).copy_from_slice(&w.w);
        Ok(())
    })
}

/// Contrastive loss of `b × p` weak/strong feature buffers. With `sim` NULL the
/// hard loss is computed; otherwise `sim` is the `b × b` caption similarity.
#[no_mangle]
pub unsafe extern "C" fn trust_contrastive_loss(
    z: *const f64,
    z_bar: *const f64,
    sim: *const f64,
    b: usize,
    p: usize,
    tau: f64,
    out_loss: *mut f64,
) -> TrustStatus {
    guard(|| {
        let out_loss = out_arg(out_loss, "out_loss")?;
        let mut g = Graph::new();
        let zn = g.constant(matrix_arg(z, b, p, "z")?);
        let zb = g.constant(matrix_arg(z_bar, b, p, "z_bar")?);
        let batch = ContrastiveBatch::new(&mut g, zn, zb, tau)?;
        let loss = if sim.is_null() {
            hard_contrastive_loss(&mut g, &batch)?
        } else {
            let sim = CaptionSimilarity::from_matrix(matrix_arg(sim, b, b, "sim")?)?;
            soft_contrastive_loss(&mut g, &batch, &sim)?
        };
        *out_loss = g.scalar(loss);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn trust_train_config_default(out: *mut TrustTrainConfig) -> TrustStatus {
    guard(|| {
        let d = TrainConfig::default();
        *out_arg(out, "out")? = TrustTrainConfig {
            batch_size: d.batch_size,
            epochs: d.epochs,
            lr: d.lr,
            tau: d.tau,
            gamma: d.gamma,
            scoring_batch_size: d.scoring_batch_size,
            seed: d.seed,
            use_soft_ctr: d.toggles.use_soft_ctr,
            use_hard_ctr: d.toggles.use_hard_ctr,
            use_uncertainty: d.toggles.use_uncertainty,
        };
        Ok(())
    })
}

/// Full pipeline: pseudo-labels, reliability weights, then training.
#[no_mangle]
pub unsafe extern "C" fn trust_train(
    source: *const TrustDataset,
    target: *const TrustDataset,
    config: *const TrustTrainConfig,
    out_model: *mut *mut TrustModel,
) -> TrustStatus {
    guard(|| {
        let source = &ref_arg(source, "source")?.0;
        let target = &ref_arg(target, "target")?.0;
        let cfg = ref_arg(config, "config")?.resolve();
        let out_model = out_arg(out_model, "out_model")?;
        let output = run_pipeline(source, target, &cfg)?;
        *out_model = Box::into_raw(Box::new(TrustModel(output.model)));
        Ok(())
    })
}

/// Accuracy of `model` on a labelled dataset, in [0, 1].
#[no_mangle]
pub unsafe extern "C" fn trust_model_evaluate(model: *const TrustModel, ds: *const TrustDataset, out_accuracy: *mut f64) -> TrustStatus {
    guard(|| {
        let model = &ref_arg(model, "model")?.0;
        let ds = &ref_arg(ds, "dataset")?.0;
        *out_arg(out_accuracy, "out_accuracy")? = evaluate(model, ds)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn trust_model_save(model: *const TrustModel, dir: *const c_char) -> TrustStatus {
    guard(|| {
        ref_arg(model, "model")?.0.save(&path_arg(dir, "dir")?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn trust_model_load(dir: *const c_char, out: *mut *mut TrustModel) -> TrustStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = VisionModel::load(&path_arg(dir, "dir")?)?;
        *out = Box::into_raw(Box::new(TrustModel(m)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn trust_model_free(model: *mut TrustModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
