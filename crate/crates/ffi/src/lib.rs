//! C ABI over the affectloop engine.
//!
//! Every fallible call returns an [`AlStatus`]; on failure a message is
//! available from [`al_last_error`] on the same thread until the next call.
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Strings returned through `char **` are owned by the caller and released
//! with [`al_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use affectloop::decoder::{decode_trial, Decoder, DecoderConfig};
use affectloop::engine::{generate, write_wav, AudioClip, Score};
use affectloop::metrics::{evaluate_clip, EstimatorConfig, PlanConsConfig};
use affectloop::planner::{InterventionPlan, KnowledgeBase, PlanConfig, Planner, PlannerMode};
use affectloop::session::{run_session, update_target, DirSink, LoopConfig, MemorySink, SessionIo};
use affectloop::signal::EegRecording;
use affectloop::{AffectState, AffectTrajectory};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Parse = 4,
    Signal = 5,
    Decoder = 6,
    Planner = 7,
    Engine = 8,
    Metrics = 9,
    Session = 10,
    Io = 11,
    Panic = 12,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(AlStatus, String);

type FfiResult<T = ()> = Result<T, Failure>;

fn fail<T>(status: AlStatus, msg: impl ToString) -> FfiResult<T> {
    Err(Failure(status, msg.to_string()))
}

trait Tag<T> {
    fn tag(self, status: AlStatus) -> FfiResult<T>;
}

impl<T, E: std::fmt::Display> Tag<T> for Result<T, E> {
    fn tag(self, status: AlStatus) -> FfiResult<T> {
        self.map_err(|e| Failure(status, e.to_string()))
    }
}

fn set_error(msg: Option<String>) {
    let c = msg.map(|m| CString::new(m.replace('\0', " ")).expect("nul bytes removed"));
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, records its error and converts panics to [`AlStatus::Panic`].
fn guard(f: impl FnOnce() -> FfiResult) -> AlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            AlStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(Some(msg));
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(Some(format!("panic: {msg}")));
            AlStatus::Panic
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p).to_str().map(Some).tag(AlStatus::InvalidUtf8)
}

unsafe fn req_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    opt_str(p)?.ok_or_else(|| Failure(AlStatus::NullPointer, format!("{what} is null")))
}

unsafe fn nonnull<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| Failure(AlStatus::NullPointer, format!("{what} is null")))
}

fn to_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s).map(CString::into_raw).tag(AlStatus::InvalidArgument)
}

fn state(v: f64, a: f64) -> FfiResult<AffectState> {
    AffectState::checked(v, a).tag(AlStatus::InvalidArgument)
}

fn parse_json<T: serde::de::DeserializeOwned>(text: Option<&str>) -> FfiResult<Option<T>> {
    text.map(|t| serde_json::from_str(t).tag(AlStatus::Parse)).transpose()
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call on this thread; do not free.
#[no_mangle]
pub extern "C" fn al_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version; static, do not free.
#[no_mangle]
pub extern "C" fn al_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn al_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Residual update: `next = clamp(post + alpha * (target - post))`.
///
/// # Safety
/// `out_valence` and `out_arousal` are valid for writes.
#[no_mangle]
pub unsafe extern "C" fn al_update_target(
    post_valence: f64,
    post_arousal: f64,
    target_valence: f64,
    target_arousal: f64,
    alpha: f64,
    out_valence: *mut f64,
    out_arousal: *mut f64,
) -> AlStatus {
    guard(|| {
        let ov = nonnull(out_valence, "out_valence")?;
        let oa = nonnull(out_arousal, "out_arousal")?;
        let (_, next) = update_target(state(post_valence, post_arousal)?, state(target_valence, target_arousal)?, alpha)
            .tag(AlStatus::InvalidArgument)?;
        *ov = next.valence;
        *oa = next.arousal;
        Ok(())
    })
}

/// Opaque affect decoder.
pub struct AlDecoder {
    inner: Decoder,
}

/// Creates a decoder from a JSON configuration, or the default when
/// `config_json` is null.
///
/// # Safety
/// `config_json` is null or a NUL-terminated string; `out_decoder` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn al_decoder_new(config_json: *const c_char, out_decoder: *mut *mut AlDecoder) -> AlStatus {
    guard(|| {
        let slot = nonnull(out_decoder, "out_decoder")?;
        let cfg: DecoderConfig = parse_json(opt_str(config_json)?)?.unwrap_or_default();
        *slot = Box::into_raw(Box::new(AlDecoder { inner: Decoder::new(cfg) }));
        Ok(())
    })
}

/// # Safety
/// `decoder` is null or was returned by [`al_decoder_new`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn al_decoder_free(decoder: *mut AlDecoder) {
    if !decoder.is_null() {
        drop(Box::from_raw(decoder));
    }
}

/// Decodes the mean affect of a channel-major recording
/// (`samples[ch * n_samples + t]`, µV) over sliding windows.
///
/// # Safety
/// `samples` holds `n_channels * n_samples` values; `labels` holds
/// `n_channels` NUL-terminated strings; the outputs are valid for writes.
#[no_mangle]
pub unsafe extern "C" fn al_decoder_decode(
    decoder: *mut AlDecoder,
    samples: *const f64,
    n_channels: usize,
    n_samples: usize,
    labels: *const *const c_char,
    sample_rate_hz: f64,
    window_s: f64,
    hop_s: f64,
    out_valence: *mut f64,
    out_arousal: *mut f64,
) -> AlStatus {
    guard(|| {
        let d = nonnull(decoder, "decoder")?;
        let ov = nonnull(out_valence, "out_valence")?;
        let oa = nonnull(out_arousal, "out_arousal")?;
        if samples.is_null() || labels.is_null() {
            return fail(AlStatus::NullPointer, "samples or labels is null");
        }
        if n_channels == 0 || n_samples == 0 {
            return fail(AlStatus::InvalidArgument, "empty recording");
        }
        let flat = std::slice::from_raw_parts(samples, n_channels * n_samples);
        let names = std::slice::from_raw_parts(labels, n_channels)
            .iter()
            .map(|&p| req_str(p, "channel label").map(str::to_string))
            .collect::<FfiResult<Vec<_>>>()?;
        let rows = flat.chunks(n_samples).map(<[f64]>::to_vec).collect();
        let rec = EegRecording::new(names, sample_rate_hz, rows).tag(AlStatus::Signal)?;
        let s = decode_trial(&mut d.inner, &rec, window_s, hop_s).tag(AlStatus::Decoder)?;
        *ov = s.valence;
        *oa = s.arousal;
        Ok(())
    })
}

/// Opaque retrieval planner.
pub struct AlPlanner {
    inner: Planner,
}

/// Creates a template planner over a JSON Lines knowledge base, or the
/// bundled one when `kb_jsonl` is null.
///
/// # Safety
/// `kb_jsonl` is null or a NUL-terminated string; `out_planner` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn al_planner_new(kb_jsonl: *const c_char, out_planner: *mut *mut AlPlanner) -> AlStatus {
    guard(|| {
        let slot = nonnull(out_planner, "out_planner")?;
        let kb = match opt_str(kb_jsonl)? {
            Some(t) => KnowledgeBase::from_jsonl(t).tag(AlStatus::Parse)?,
            None => KnowledgeBase::starter(),
        };
        *slot = Box::into_raw(Box::new(AlPlanner { inner: Planner::new(kb, &PlannerMode::Template) }));
        Ok(())
    })
}

/// # Safety
/// `planner` is null or was returned by [`al_planner_new`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn al_planner_free(planner: *mut AlPlanner) {
    if !planner.is_null() {
        drop(Box::from_raw(planner));
    }
}

/// Plans from `state` toward `target`; writes the plan as canonical JSON.
///
/// # Safety
/// `planner` is a live handle; `out_plan_json` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn al_planner_plan(
    planner: *mut AlPlanner,
    state_valence: f64,
    state_arousal: f64,
    target_valence: f64,
    target_arousal: f64,
    sections: usize,
    duration_s: f64,
    alpha_plan: f64,
    out_plan_json: *mut *mut c_char,
) -> AlStatus {
    guard(|| {
        let p = nonnull(planner, "planner")?;
        let slot = nonnull(out_plan_json, "out_plan_json")?;
        let s = state(state_valence, state_arousal)?;
        let cfg = PlanConfig { sections, duration_s, alpha_plan, allow_fallback: true };
        let plan = p
            .inner
            .plan(s, &AffectTrajectory::constant(s), state(target_valence, target_arousal)?, &cfg)
            .tag(AlStatus::Planner)?;
        *slot = to_c_string(plan.to_canonical_json())?;
        Ok(())
    })
}

/// Opaque rendered clip with the plan and score it came from.
pub struct AlClip {
    plan: InterventionPlan,
    score: Score,
    clip: AudioClip,
}

/// Renders a plan given as JSON, starting from `state`.
///
/// # Safety
/// `plan_json` is a NUL-terminated string; `out_clip` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn al_generate(
    plan_json: *const c_char,
    state_valence: f64,
    state_arousal: f64,
    seed: u64,
    sample_rate_hz: u32,
    out_clip: *mut *mut AlClip,
) -> AlStatus {
    guard(|| {
        let slot = nonnull(out_clip, "out_clip")?;
        let plan: InterventionPlan = parse_json(Some(req_str(plan_json, "plan_json")?))?.expect("text given");
        plan.validate().tag(AlStatus::Planner)?;
        let (score, clip) =
            generate(&plan, state(state_valence, state_arousal)?, seed, sample_rate_hz).tag(AlStatus::Engine)?;
        *slot = Box::into_raw(Box::new(AlClip { plan, score, clip }));
        Ok(())
    })
}

/// # Safety
/// `clip` is null or was returned by [`al_generate`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn al_clip_free(clip: *mut AlClip) {
    if !clip.is_null() {
        drop(Box::from_raw(clip));
    }
}

/// Borrowed view of the PCM samples, valid while the clip lives.
///
/// # Safety
/// `clip` is a live handle; the outputs are valid for writes.
#[no_mangle]
pub unsafe extern "C" fn al_clip_samples(
    clip: *mut AlClip,
    out_samples: *mut *const f64,
    out_len: *mut usize,
    out_sample_rate_hz: *mut u32,
) -> AlStatus {
    guard(|| {
        let c = nonnull(clip, "clip")?;
        *nonnull(out_samples, "out_samples")? = c.clip.samples.as_ptr();
        *nonnull(out_len, "out_len")? = c.clip.samples.len();
        *nonnull(out_sample_rate_hz, "out_sample_rate_hz")? = c.clip.sample_rate_hz;
        Ok(())
    })
}

/// Writes the clip as 16-bit PCM WAV.
///
/// # Safety
/// `clip` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn al_clip_write_wav(clip: *mut AlClip, path: *const c_char) -> AlStatus {
    guard(|| {
        let c = nonnull(clip, "clip")?;
        write_wav(&c.clip, Path::new(req_str(path, "path")?)).tag(AlStatus::Io)
    })
}

/// Metric report of the clip against `target`, as canonical JSON.
///
/// # Safety
/// `clip` is a live handle; `out_report_json` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn al_clip_metrics(
    clip: *mut AlClip,
    target_valence: f64,
    target_arousal: f64,
    out_report_json: *mut *mut c_char,
) -> AlStatus {
    guard(|| {
        let c = nonnull(clip, "clip")?;
        let slot = nonnull(out_report_json, "out_report_json")?;
        let m = evaluate_clip(
            &c.plan,
            &c.score,
            &c.clip,
            state(target_valence, target_arousal)?,
            &EstimatorConfig::default(),
            &PlanConsConfig::default(),
        )
        .tag(AlStatus::Metrics)?;
        *slot = to_c_string(affectloop::canonical::to_string(&m).tag(AlStatus::Metrics)?)?;
        Ok(())
    })
}

/// Runs a simulated session and writes its report as canonical JSON. With
/// `out_dir` set, the round log, clips and reports are written there too.
/// A null `config_json` uses the defaults.
///
/// # Safety
/// String arguments are null or NUL-terminated; `out_report_json` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn al_session_run(
    config_json: *const c_char,
    seed: u64,
    out_dir: *const c_char,
    out_report_json: *mut *mut c_char,
) -> AlStatus {
    guard(|| {
        let slot = nonnull(out_report_json, "out_report_json")?;
        let cfg: LoopConfig = parse_json(opt_str(config_json)?)?.unwrap_or_default();
        if cfg.subject.is_live() {
            return fail(AlStatus::InvalidArgument, "live sessions are not available through this call");
        }
        let mut io: Box<dyn SessionIo> = match opt_str(out_dir)? {
            Some(d) => Box::new(DirSink::create(Path::new(d)).tag(AlStatus::Io)?),
            None => Box::new(MemorySink::default()),
        };
        let report = run_session(&cfg, KnowledgeBase::starter(), None, seed, io.as_mut()).tag(AlStatus::Session)?;
        *slot = to_c_string(report.to_canonical_json())?;
        Ok(())
    })
}
