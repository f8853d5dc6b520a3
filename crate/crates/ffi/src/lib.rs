//! C interface to the `oodcf` pipeline.
//!
//! Every function returns an [`OodcfStatus`]; on failure the message is
//! available from [`oodcf_last_error_message`] on the same thread. Pipelines
//! are opaque handles created by [`oodcf_pipeline_fit`] and released with
//! [`oodcf_pipeline_free`]. Matrices are row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use oodcf::counterfactual::{CfiConfig, GenerationConfig, Order, Variant};
use oodcf::dataset::LabeledDataset;
use oodcf::partition::SearchOptions;
use oodcf::pipeline::{EvalOn, FittedPipeline, PipelineConfig};
use oodcf::projection::Scaling;
use oodcf::{Error, ErrorClass};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodcfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    DataError = 4,
    NumericalError = 5,
    CapExceeded = 6,
    IoError = 7,
    Panic = 8,
}

/// Fitted projection, partition and density models.
pub struct OodcfPipeline {
    inner: FittedPipeline,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OodcfScore {
    pub l_n: f64,
    pub l_d: f64,
    pub l_total: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OodcfFitParams {
    /// Latent dims; 0 keeps every input column.
    pub k: usize,
    pub slack: f64,
    /// Largest k for the exhaustive partition search.
    pub cap: usize,
    /// true: unit-variance scaling; false: centering only.
    pub standardize: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OodcfGenerationParams {
    /// 0 = full two-step, 1 = single joint Gaussian, 2 = non-dis step only,
    /// 3 = dis step only.
    pub variant: u32,
    /// 0 = non-dis step first, 1 = dis step first.
    pub order: u32,
    pub step_size: f64,
    pub max_iter: usize,
    pub stop_quantile: f64,
    /// Target class, or -1 for the closest class.
    pub target: i64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> OodcfStatus {
    match e {
        Error::DimensionMismatch { .. } => OodcfStatus::DimensionMismatch,
        Error::CapExceeded { .. } => OodcfStatus::CapExceeded,
        Error::SeedFailed { source, .. } => status_of(source),
        _ => match e.class() {
            ErrorClass::Config => OodcfStatus::InvalidArgument,
            ErrorClass::Data => OodcfStatus::DataError,
            ErrorClass::Numerical => OodcfStatus::NumericalError,
            ErrorClass::Io => OodcfStatus::IoError,
        },
    }
}

/// Runs `f`, converting errors and panics into a status plus a message.
fn guard<F>(f: F) -> OodcfStatus
where
    F: FnOnce() -> Result<(), (OodcfStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OodcfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            OodcfStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (OodcfStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (OodcfStatus, String) {
    (OodcfStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> (OodcfStatus, String) {
    (OodcfStatus::InvalidArgument, msg.into())
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn slice<'a, T>(
    ptr: *const T,
    len: usize,
    what: &str,
) -> Result<&'a [T], (OodcfStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn pipeline_ref<'a>(
    p: *const OodcfPipeline,
) -> Result<&'a FittedPipeline, (OodcfStatus, String)> {
    p.as_ref().map(|p| &p.inner).ok_or_else(|| null("pipeline"))
}

fn id_dataset(
    x: &[f64],
    n_rows: usize,
    n_cols: usize,
    labels: &[u32],
) -> Result<LabeledDataset, (OodcfStatus, String)> {
    let class_label: Vec<Option<usize>> = labels.iter().map(|&l| Some(l as usize)).collect();
    let n_classes = labels.iter().max().map_or(0, |m| *m as usize + 1);
    if n_classes < 2 {
        return Err(lib_err(Error::TooFewClasses(n_classes)));
    }
    Ok(LabeledDataset {
        features: DMatrix::from_row_slice(n_rows, n_cols, x),
        class_label,
        ood_flag: vec![false; n_rows],
        feature_names: (0..n_cols).map(|j| format!("x{j}")).collect(),
        provenance: "ffi".into(),
        n_classes,
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn oodcf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn oodcf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn oodcf_fit_params_default() -> OodcfFitParams {
    let s = SearchOptions::default();
    OodcfFitParams {
        k: 0,
        slack: s.slack,
        cap: s.cap,
        standardize: true,
    }
}

#[no_mangle]
pub extern "C" fn oodcf_generation_params_default() -> OodcfGenerationParams {
    let g = GenerationConfig::default();
    OodcfGenerationParams {
        variant: 0,
        order: 0,
        step_size: g.step_size,
        max_iter: g.max_iter,
        stop_quantile: g.stop_quantile,
        target: -1,
    }
}

/// Fits a pipeline on ID training rows `features` (n_rows × n_cols) with
/// class ids `labels` in `0..C`. Partition entropies use `eval_features`
/// (n_eval × n_cols) when non-null, else the training rows.
///
/// # Safety
/// Array pointers must be valid for the stated lengths; `params` may be
/// null for defaults; `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn oodcf_pipeline_fit(
    features: *const f64,
    n_rows: usize,
    n_cols: usize,
    labels: *const u32,
    eval_features: *const f64,
    n_eval: usize,
    params: *const OodcfFitParams,
    out: *mut *mut OodcfPipeline,
) -> OodcfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if n_rows == 0 || n_cols == 0 {
            return Err(invalid("need at least one row and one column"));
        }
        let len = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| invalid("size overflow"))?;
        let x = slice(features, len, "features")?;
        let y = slice(labels, n_rows, "labels")?;
        let params = params
            .as_ref()
            .copied()
            .unwrap_or_else(|| oodcf_fit_params_default());
        let train = id_dataset(x, n_rows, n_cols, y)?;
        let eval_on = if eval_features.is_null() {
            EvalOn::Train
        } else {
            EvalOn::Test
        };
        let eval = if eval_features.is_null() {
            train.clone()
        } else {
            let len = n_eval
                .checked_mul(n_cols)
                .ok_or_else(|| invalid("size overflow"))?;
            let e = slice(eval_features, len, "eval_features")?;
            let mut ds = id_dataset(x, n_rows, n_cols, y)?;
            ds.features = DMatrix::from_row_slice(n_eval, n_cols, e);
            ds.class_label = vec![Some(0); n_eval];
            ds.ood_flag = vec![false; n_eval];
            ds
        };
        let cfg = PipelineConfig {
            k: (params.k > 0).then_some(params.k),
            scaling: if params.standardize {
                Scaling::UnitVariance
            } else {
                Scaling::CenterOnly
            },
            search: SearchOptions {
                slack: params.slack,
                cap: params.cap,
            },
            eval_on,
        };
        let inner = FittedPipeline::fit(&train, &eval, &cfg, None).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(OodcfPipeline { inner }));
        Ok(())
    })
}

/// Releases a pipeline. Null is ignored.
///
/// # Safety
/// `pipeline` must come from [`oodcf_pipeline_fit`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn oodcf_pipeline_free(pipeline: *mut OodcfPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Writes input dimension, latent dimension and number of ID classes; any
/// output pointer may be null.
///
/// # Safety
/// `pipeline` must be a live handle; outputs must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn oodcf_pipeline_dims(
    pipeline: *const OodcfPipeline,
    input_dim: *mut usize,
    latent_dim: *mut usize,
    n_classes: *mut usize,
) -> OodcfStatus {
    guard(|| {
        let p = pipeline_ref(pipeline)?;
        if let Some(d) = input_dim.as_mut() {
            *d = p.projection.input_dim();
        }
        if let Some(k) = latent_dim.as_mut() {
            *k = p.projection.latent_dim();
        }
        if let Some(c) = n_classes.as_mut() {
            *c = p.density.n_classes();
        }
        Ok(())
    })
}

/// Fills `is_discriminative[j]` with 1 when latent dim j is in z_d, else 0.
/// `len` must equal the latent dimension.
///
/// # Safety
/// `is_discriminative` must be writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn oodcf_pipeline_partition(
    pipeline: *const OodcfPipeline,
    is_discriminative: *mut u8,
    len: usize,
) -> OodcfStatus {
    guard(|| {
        let p = pipeline_ref(pipeline)?;
        let k = p.projection.latent_dim();
        if len != k {
            return Err(lib_err(Error::DimensionMismatch {
                expected: k,
                got: len,
            }));
        }
        if is_discriminative.is_null() {
            return Err(null("is_discriminative"));
        }
        let out = std::slice::from_raw_parts_mut(is_discriminative, len);
        out.fill(0);
        for &j in p.partition().z_d() {
            out[j] = 1;
        }
        Ok(())
    })
}

/// OOD score of one raw input row of length `n_cols`.
///
/// # Safety
/// `x` must be readable for `n_cols` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oodcf_pipeline_score(
    pipeline: *const OodcfPipeline,
    x: *const f64,
    n_cols: usize,
    out: *mut OodcfScore,
) -> OodcfStatus {
    guard(|| {
        let p = pipeline_ref(pipeline)?;
        let x = slice(x, n_cols, "x")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = p.score(x).map_err(lib_err)?;
        *out = OodcfScore {
            l_n: s.l_n,
            l_d: s.l_d,
            l_total: s.l_total,
        };
        Ok(())
    })
}

/// Generates a counterfactual for `x` into `counterfactual` (both length
/// `n_cols`). `params` may be null for defaults; `score_after` may be null.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn oodcf_pipeline_generate(
    pipeline: *const OodcfPipeline,
    x: *const f64,
    n_cols: usize,
    params: *const OodcfGenerationParams,
    counterfactual: *mut f64,
    score_after: *mut OodcfScore,
) -> OodcfStatus {
    guard(|| {
        let p = pipeline_ref(pipeline)?;
        let x = slice(x, n_cols, "x")?;
        if counterfactual.is_null() {
            return Err(null("counterfactual"));
        }
        let params = params
            .as_ref()
            .copied()
            .unwrap_or_else(|| oodcf_generation_params_default());
        let variant = match params.variant {
            0 => Variant::Full,
            1 => Variant::Sg,
            2 => Variant::Sn,
            3 => Variant::Sd,
            v => return Err(invalid(format!("unknown variant {v}"))),
        };
        let order = match params.order {
            0 => Order::NonDisFirst,
            1 => Order::DisFirst,
            o => return Err(invalid(format!("unknown order {o}"))),
        };
        let target = match params.target {
            t if t < 0 => None,
            t => Some(t as usize),
        };
        let cfg = GenerationConfig {
            order,
            step_size: params.step_size,
            max_iter: params.max_iter,
            stop_quantile: params.stop_quantile,
            target,
        };
        let r = p
            .counterfactual(x, variant, &cfg, &CfiConfig::default())
            .map_err(lib_err)?;
        std::slice::from_raw_parts_mut(counterfactual, n_cols).copy_from_slice(&r.x_counterfactual);
        if let Some(s) = score_after.as_mut() {
            *s = OodcfScore {
                l_n: r.score_after.l_n,
                l_d: r.score_after.l_d,
                l_total: r.score_after.l_total,
            };
        }
        Ok(())
    })
}

/// Rank-based AUROC of `positive` against `negative` scores.
///
/// # Safety
/// Arrays must be readable for the stated lengths; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn oodcf_auroc(
    positive: *const f64,
    n_positive: usize,
    negative: *const f64,
    n_negative: usize,
    out: *mut f64,
) -> OodcfStatus {
    guard(|| {
        let pos = slice(positive, n_positive, "positive")?;
        let neg = slice(negative, n_negative, "negative")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = oodcf::report::auroc(pos, neg).map_err(lib_err)?;
        Ok(())
    })
}
