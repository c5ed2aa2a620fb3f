//! C ABI for embedding the solver toolkit in other languages.
//!
//! Every fallible call returns a [`PpnStatus`]; on failure,
//! [`ppn_last_error_message`] holds a thread-local description. Handles are
//! opaque, and every constructor has a matching `*_free`. The committed
//! header `include/phasepinn.h` is regenerated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use ndarray::ArrayView2;
use phasepinn::cli::{cmd_train, RunArgs, TrainArgs};
use phasepinn::network::{Network, NetworkSpec};
use phasepinn::reference::ReferenceSolution;
use phasepinn::{metrics, Error};

/// Result class of every fallible call in this library.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpnStatus {
    /// Success; out-parameters are filled in.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Lengths, dimensions, encodings, or config contents were rejected.
    InvalidArgument = 2,
    /// File system failure, including refusing to overwrite existing output.
    Io = 3,
    /// A file exists but its contents are not a valid archive/checkpoint/config.
    Format = 4,
    /// The computation produced non-finite values or went unstable.
    Numeric = 5,
    /// An internal invariant failed; the handle may be in an unusable state.
    Panic = 6,
}

/// Trained feed-forward network (opaque).
pub struct PpnNetwork(Network);

/// Dense space-time solution archive used as ground truth (opaque).
pub struct PpnReference(ReferenceSolution);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: PpnStatus, msg: impl AsRef<str>) -> PpnStatus {
    let text = msg.as_ref().replace('\0', "?");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).expect("NUL stripped"));
    status
}

fn status_of(err: &Error) -> PpnStatus {
    match err {
        Error::Io { .. } | Error::Exists(_) => PpnStatus::Io,
        Error::Format(_) => PpnStatus::Format,
        Error::Numeric { .. } | Error::Instability { .. } => PpnStatus::Numeric,
        _ => PpnStatus::InvalidArgument,
    }
}

fn fail_error(err: Error) -> PpnStatus {
    fail(status_of(&err), err.to_string())
}

/// Panics must not unwind across the C boundary.
fn guarded(f: impl FnOnce() -> PpnStatus) -> PpnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(PpnStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn path_arg(ptr: *const c_char, name: &str) -> Result<PathBuf, PpnStatus> {
    if ptr.is_null() {
        return Err(fail(PpnStatus::NullArgument, format!("{name} is null")));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(PpnStatus::InvalidArgument, format!("{name} is not valid UTF-8"))),
    }
}

/// Message for the most recent failure on this thread.
///
/// Empty until a call fails. The pointer stays valid until the next failing
/// call on the same thread; copy it if you need to keep it.
#[no_mangle]
pub extern "C" fn ppn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ppn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// -- network ------------------------------------------------------------

/// Create a tanh network with `hidden_layers` layers of `hidden_width` units
/// and weights drawn by Xavier initialization from `seed`.
///
/// # Safety
/// `out` must point to a writable `PpnNetwork*` slot.
#[no_mangle]
pub unsafe extern "C" fn ppn_network_init(
    input_dim: usize,
    hidden_layers: usize,
    hidden_width: usize,
    output_dim: usize,
    seed: u64,
    out: *mut *mut PpnNetwork,
) -> PpnStatus {
    if out.is_null() {
        return fail(PpnStatus::NullArgument, "out is null");
    }
    guarded(|| {
        let spec = NetworkSpec::new(input_dim, hidden_layers, hidden_width, output_dim);
        match Network::init(&spec, seed) {
            Ok(net) => {
                *out = Box::into_raw(Box::new(PpnNetwork(net)));
                PpnStatus::Ok
            }
            Err(e) => fail_error(e),
        }
    })
}

/// Load a network checkpoint written by [`ppn_network_save`] or the trainer.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must point to a writable
/// `PpnNetwork*` slot.
#[no_mangle]
pub unsafe extern "C" fn ppn_network_load(
    path: *const c_char,
    out: *mut *mut PpnNetwork,
) -> PpnStatus {
    if out.is_null() {
        return fail(PpnStatus::NullArgument, "out is null");
    }
    guarded(|| {
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match Network::load(&path) {
            Ok(net) => {
                *out = Box::into_raw(Box::new(PpnNetwork(net)));
                PpnStatus::Ok
            }
            Err(e) => fail_error(e),
        }
    })
}

/// Write `network` as a checkpoint file (atomic replace, bit-exact reload).
///
/// # Safety
/// `network` must be a live handle from this library; `path` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ppn_network_save(
    network: *const PpnNetwork,
    path: *const c_char,
) -> PpnStatus {
    if network.is_null() {
        return fail(PpnStatus::NullArgument, "network is null");
    }
    guarded(|| {
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match (*network).0.save(&path) {
            Ok(()) => PpnStatus::Ok,
            Err(e) => fail_error(e),
        }
    })
}

/// Input dimension of `network`, or 0 if the handle is null.
///
/// # Safety
/// `network` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ppn_network_input_dim(network: *const PpnNetwork) -> usize {
    if network.is_null() {
        return 0;
    }
    (*network).0.input_dim()
}

/// Output dimension of `network`, or 0 if the handle is null.
///
/// # Safety
/// `network` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ppn_network_output_dim(network: *const PpnNetwork) -> usize {
    if network.is_null() {
        return 0;
    }
    (*network).0.output_dim()
}

/// Evaluate `network` on `n_points` rows of `point_dim` coordinates
/// (row-major). Writes `n_points * output_dim` values to `out`, row-major.
///
/// # Safety
/// `points` must hold `n_points * point_dim` doubles and `out` must have room
/// for `out_len` doubles; `network` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ppn_network_forward(
    network: *const PpnNetwork,
    points: *const f64,
    n_points: usize,
    point_dim: usize,
    out: *mut f64,
    out_len: usize,
) -> PpnStatus {
    if network.is_null() {
        return fail(PpnStatus::NullArgument, "network is null");
    }
    guarded(|| {
        let net = &(*network).0;
        if point_dim != net.input_dim() {
            return fail(
                PpnStatus::InvalidArgument,
                format!("point_dim {} does not match network input {}", point_dim, net.input_dim()),
            );
        }
        let need = n_points * net.output_dim();
        if out_len != need {
            return fail(
                PpnStatus::InvalidArgument,
                format!("out_len {out_len} but {n_points} points need {need}"),
            );
        }
        if n_points == 0 {
            return PpnStatus::Ok;
        }
        if points.is_null() || out.is_null() {
            return fail(PpnStatus::NullArgument, "points/out is null");
        }
        let rows = std::slice::from_raw_parts(points, n_points * point_dim);
        let view = ArrayView2::from_shape((n_points, point_dim), rows).expect("length checked");
        match net.forward_batch(view) {
            Ok(values) => {
                let dst = std::slice::from_raw_parts_mut(out, out_len);
                for (d, s) in dst.iter_mut().zip(values.iter()) {
                    *d = *s;
                }
                PpnStatus::Ok
            }
            Err(e) => fail_error(e),
        }
    })
}

/// Release a network handle. Null is a no-op.
///
/// # Safety
/// `network` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ppn_network_free(network: *mut PpnNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

// -- reference solution ---------------------------------------------------

/// Load a solution archive produced by the `phasepinn reference` command.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must point to a writable
/// `PpnReference*` slot.
#[no_mangle]
pub unsafe extern "C" fn ppn_reference_load(
    path: *const c_char,
    out: *mut *mut PpnReference,
) -> PpnStatus {
    if out.is_null() {
        return fail(PpnStatus::NullArgument, "out is null");
    }
    guarded(|| {
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match ReferenceSolution::load(&path) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(PpnReference(r)));
                PpnStatus::Ok
            }
            Err(e) => fail_error(e),
        }
    })
}

/// Number of spatial dimensions in the archive, or 0 if the handle is null.
///
/// # Safety
/// `reference` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ppn_reference_spatial_dim(reference: *const PpnReference) -> usize {
    if reference.is_null() {
        return 0;
    }
    (*reference).0.spec.spatial_dim()
}

/// Last stored time in the archive, or NaN if the handle is null.
///
/// # Safety
/// `reference` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ppn_reference_t_end(reference: *const PpnReference) -> f64 {
    if reference.is_null() {
        return f64::NAN;
    }
    (*reference).0.t_end()
}

/// Sample the stored field at `n_points` space-time rows of `point_dim`
/// coordinates (spatial coordinates then time). Writes `n_points` values to
/// `out`. Points outside the stored domain or time range are rejected.
///
/// # Safety
/// `points` must hold `n_points * point_dim` doubles and `out` must have room
/// for `n_points` doubles; `reference` must be a live handle from this
/// library.
#[no_mangle]
pub unsafe extern "C" fn ppn_reference_sample(
    reference: *const PpnReference,
    points: *const f64,
    n_points: usize,
    point_dim: usize,
    out: *mut f64,
) -> PpnStatus {
    if reference.is_null() {
        return fail(PpnStatus::NullArgument, "reference is null");
    }
    guarded(|| {
        let r = &(*reference).0;
        let need = r.spec.spatial_dim() + 1;
        if point_dim != need {
            return fail(
                PpnStatus::InvalidArgument,
                format!("point_dim {point_dim} but this archive needs {need} coordinates"),
            );
        }
        if n_points == 0 {
            return PpnStatus::Ok;
        }
        if points.is_null() || out.is_null() {
            return fail(PpnStatus::NullArgument, "points/out is null");
        }
        let rows = std::slice::from_raw_parts(points, n_points * point_dim);
        let view = ArrayView2::from_shape((n_points, point_dim), rows).expect("length checked");
        match r.sample(view) {
            Ok(values) => {
                std::slice::from_raw_parts_mut(out, n_points).copy_from_slice(&values);
                PpnStatus::Ok
            }
            Err(e) => fail_error(e),
        }
    })
}

/// Release a reference handle. Null is a no-op.
///
/// # Safety
/// `reference` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ppn_reference_free(reference: *mut PpnReference) {
    if !reference.is_null() {
        drop(Box::from_raw(reference));
    }
}

// -- metrics and training ---------------------------------------------------

/// Relative l2 error between `prediction` and `truth` (`len` entries each),
/// written to `out`.
///
/// # Safety
/// `prediction` and `truth` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ppn_rel_l2(
    prediction: *const f64,
    truth: *const f64,
    len: usize,
    out: *mut f64,
) -> PpnStatus {
    if prediction.is_null() || truth.is_null() || out.is_null() {
        return fail(PpnStatus::NullArgument, "prediction/truth/out is null");
    }
    guarded(|| {
        let p = std::slice::from_raw_parts(prediction, len);
        let t = std::slice::from_raw_parts(truth, len);
        match metrics::rel_l2(p, t) {
            Ok(v) => {
                *out = v;
                PpnStatus::Ok
            }
            Err(e) => fail_error(e),
        }
    })
}

/// Run a full training job from an experiment config file, writing the same
/// `train/` outputs as the `phasepinn train` command: checkpoints, training
/// log, sampled points, report, and manifest.
///
/// `out_dir` and `seed` override the config when non-null. With `no_eval` the
/// run skips scoring and needs no reference archive. `force` overwrites a
/// previous run's outputs.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out_dir` must be null or
/// NUL-terminated; `seed` must be null or point to a readable u64.
#[no_mangle]
pub unsafe extern "C" fn ppn_train_run(
    config_path: *const c_char,
    out_dir: *const c_char,
    seed: *const u64,
    paper_scale: bool,
    no_eval: bool,
    force: bool,
) -> PpnStatus {
    guarded(|| {
        let config = match path_arg(config_path, "config_path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        let out = if out_dir.is_null() {
            None
        } else {
            match path_arg(out_dir, "out_dir") {
                Ok(p) => Some(p),
                Err(status) => return status,
            }
        };
        let args = TrainArgs {
            run: RunArgs { config, out, seed: seed.as_ref().copied(), force, paper_scale },
            no_eval,
        };
        match cmd_train(&args) {
            Ok(()) => PpnStatus::Ok,
            Err(e) => fail_error(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    use phasepinn::pde::{IcName, ProblemSpec};
    use phasepinn::reference::solve_ac_1d;
    use tempfile::tempdir;

    const EXPORTS: &[&str] = &[
        "ppn_last_error_message",
        "ppn_version",
        "ppn_network_init",
        "ppn_network_load",
        "ppn_network_save",
        "ppn_network_input_dim",
        "ppn_network_output_dim",
        "ppn_network_forward",
        "ppn_network_free",
        "ppn_reference_load",
        "ppn_reference_spatial_dim",
        "ppn_reference_t_end",
        "ppn_reference_sample",
        "ppn_reference_free",
        "ppn_rel_l2",
        "ppn_train_run",
    ];

    fn last_message() -> String {
        unsafe { CStr::from_ptr(ppn_last_error_message()) }.to_str().unwrap().to_string()
    }

    fn c_path(p: &std::path::Path) -> CString {
        CString::new(p.to_str().unwrap()).unwrap()
    }

    #[test]
    fn null_arguments_are_reported_not_dereferenced() {
        unsafe {
            let mut net: *mut PpnNetwork = ptr::null_mut();
            assert_eq!(ppn_network_load(ptr::null(), &mut net), PpnStatus::NullArgument);
            assert!(last_message().contains("path"));
            assert_eq!(ppn_network_init(2, 1, 8, 1, 0, ptr::null_mut()), PpnStatus::NullArgument);
            assert_eq!(ppn_network_save(ptr::null(), ptr::null()), PpnStatus::NullArgument);
            assert_eq!(ppn_network_input_dim(ptr::null()), 0);
            assert!(ppn_reference_t_end(ptr::null()).is_nan());
            let mut out = 0.0;
            assert_eq!(
                ppn_rel_l2(ptr::null(), ptr::null(), 3, &mut out),
                PpnStatus::NullArgument
            );
            ppn_network_free(ptr::null_mut());
            ppn_reference_free(ptr::null_mut());
        }
    }

    #[test]
    fn network_roundtrips_through_the_c_surface() {
        let tmp = tempdir().unwrap();
        let path = c_path(&tmp.path().join("net.bin"));
        unsafe {
            let mut net: *mut PpnNetwork = ptr::null_mut();
            assert_eq!(ppn_network_init(2, 2, 8, 1, 7, &mut net), PpnStatus::Ok);
            assert_eq!(ppn_network_input_dim(net), 2);
            assert_eq!(ppn_network_output_dim(net), 1);
            assert_eq!(ppn_network_save(net, path.as_ptr()), PpnStatus::Ok);

            let mut copy: *mut PpnNetwork = ptr::null_mut();
            assert_eq!(ppn_network_load(path.as_ptr(), &mut copy), PpnStatus::Ok);

            let points = [0.3, 0.1, -0.5, 0.9, 0.0, 1.0];
            let mut a = [0.0; 3];
            let mut b = [0.0; 3];
            assert_eq!(
                ppn_network_forward(net, points.as_ptr(), 3, 2, a.as_mut_ptr(), 3),
                PpnStatus::Ok
            );
            assert_eq!(
                ppn_network_forward(copy, points.as_ptr(), 3, 2, b.as_mut_ptr(), 3),
                PpnStatus::Ok
            );
            assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
            assert_ne!(a[0], a[1]);

            ppn_network_free(net);
            ppn_network_free(copy);
        }
    }

    #[test]
    fn forward_rejects_mismatched_shapes() {
        unsafe {
            let mut net: *mut PpnNetwork = ptr::null_mut();
            assert_eq!(ppn_network_init(2, 1, 4, 1, 0, &mut net), PpnStatus::Ok);
            let points = [0.0; 6];
            let mut out = [0.0; 2];
            assert_eq!(
                ppn_network_forward(net, points.as_ptr(), 2, 3, out.as_mut_ptr(), 2),
                PpnStatus::InvalidArgument
            );
            assert!(last_message().contains("point_dim"));
            assert_eq!(
                ppn_network_forward(net, points.as_ptr(), 3, 2, out.as_mut_ptr(), 2),
                PpnStatus::InvalidArgument
            );
            assert!(last_message().contains("out_len"));
            // Zero points succeed without touching the data pointers.
            assert_eq!(
                ppn_network_forward(net, ptr::null(), 0, 2, ptr::null_mut(), 0),
                PpnStatus::Ok
            );
            ppn_network_free(net);
        }
    }

    #[test]
    fn reference_sampling_matches_the_core_api() {
        let spec = ProblemSpec::ac_1d(1e-4, 5.0, [-1.0, 1.0], 1.0, IcName::AcCos);
        let solved = solve_ac_1d(&spec, 128, 1e-3, 0.5).unwrap();
        let tmp = tempdir().unwrap();
        let path = tmp.path().join("ref.arch");
        solved.save(&path).unwrap();

        let points = [[-0.4, 0.25], [0.3, 0.9], [0.99, 0.0]];
        let flat: Vec<f64> = points.iter().flatten().copied().collect();
        let expect = solved
            .sample(ArrayView2::from_shape((3, 2), &flat).unwrap())
            .unwrap();

        let cpath = c_path(&path);
        unsafe {
            let mut r: *mut PpnReference = ptr::null_mut();
            assert_eq!(ppn_reference_load(cpath.as_ptr(), &mut r), PpnStatus::Ok);
            assert_eq!(ppn_reference_spatial_dim(r), 1);
            assert_eq!(ppn_reference_t_end(r), 1.0);

            let mut got = [0.0; 3];
            assert_eq!(
                ppn_reference_sample(r, flat.as_ptr(), 3, 2, got.as_mut_ptr()),
                PpnStatus::Ok
            );
            assert_eq!(got.to_vec(), expect);

            // Outside the stored time range.
            let bad = [0.0, 2.0];
            assert_eq!(
                ppn_reference_sample(r, bad.as_ptr(), 1, 2, got.as_mut_ptr()),
                PpnStatus::InvalidArgument
            );
            ppn_reference_free(r);
        }
    }

    #[test]
    fn rel_l2_agrees_with_the_core_and_rejects_empty() {
        let p = [1.0, 2.0, 2.0];
        let t = [1.0, 1.0, 2.0];
        let mut out = 0.0;
        unsafe {
            assert_eq!(ppn_rel_l2(p.as_ptr(), t.as_ptr(), 3, &mut out), PpnStatus::Ok);
            assert_eq!(out, metrics::rel_l2(&p, &t).unwrap());
            assert_eq!(
                ppn_rel_l2(p.as_ptr(), t.as_ptr(), 0, &mut out),
                PpnStatus::InvalidArgument
            );
        }
    }

    #[test]
    fn train_run_writes_the_train_outputs() {
        let tmp = tempdir().unwrap();
        let config_text = "
[problem]
family = \"ac_1d\"
ic = \"ac_cos\"
gamma1 = 1e-4
gamma2 = 5.0

[strategy]
kind = \"baseline\"
n_u = 8
n_b = 6
n_f = 24

[optimizer]
adam_epochs = 2
lbfgs_max_iter = 2
";
        let config = tmp.path().join("exp.toml");
        std::fs::write(&config, config_text).unwrap();
        let out = tmp.path().join("run");

        let cconfig = c_path(&config);
        let cout = c_path(&out);
        let seed = 3u64;
        unsafe {
            assert_eq!(
                ppn_train_run(cconfig.as_ptr(), cout.as_ptr(), &seed, false, true, false),
                PpnStatus::Ok
            );
            assert!(out.join("train/report.json").exists());
            assert!(out.join("train/checkpoint.bin").exists());
            // Refuses to overwrite, then allows it with force.
            assert_eq!(
                ppn_train_run(cconfig.as_ptr(), cout.as_ptr(), &seed, false, true, false),
                PpnStatus::Io
            );
            assert!(last_message().contains("--force"));
            assert_eq!(
                ppn_train_run(cconfig.as_ptr(), cout.as_ptr(), &seed, false, true, true),
                PpnStatus::Ok
            );
        }
    }

    #[test]
    fn generated_header_declares_every_export() {
        let header_path =
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/phasepinn.h");
        let header = std::fs::read_to_string(&header_path).unwrap();
        for symbol in EXPORTS {
            assert!(header.contains(symbol), "header is missing `{symbol}`");
        }
        for decl in [
            "#ifndef PHASEPINN_H",
            "typedef struct PpnNetwork PpnNetwork;",
            "typedef struct PpnReference PpnReference;",
            "PPN_STATUS_OK = 0",
            "PPN_STATUS_PANIC = 6",
        ] {
            assert!(header.contains(decl), "header is missing `{decl}`");
        }
    }
}
