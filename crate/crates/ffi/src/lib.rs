//! C interface to the trajectory exchange pipeline.
//!
//! Objects cross the boundary as opaque handles created by `*_new` and released by
//! `*_free`. Every fallible call returns a [`TrajexStatus`]; on failure the message is
//! available from [`trajex_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use trajex::exchange::codec::QUERY_LEN;
use trajex::exchange::{
    decode_query, decode_response, encode_response, fuse, AgentEndpoint, CostQuery, FixedCostmaps,
    FusionMode, PipelineConfig,
};
use trajex::geometry::Pose2;
use trajex::grid::{
    binarize_with, entropy, signed_distance, GridSpec, OccupancyForecast, Raster, NUM_CLASSES,
};
use trajex::trajectory::{generate_dictionary, DictionaryConfig, TrajectoryDictionary};
use trajex::Error;

/// Result of every fallible call. Values 2 to 9 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajexStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Shape = 3,
    Horizon = 4,
    Protocol = 5,
    Decode = 6,
    Generation = 7,
    Io = 8,
    Serde = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajexFusionMode {
    WeightedMean = 0,
    VerbatimSum = 1,
}

/// Opaque trajectory dictionary.
pub struct TrajexDictionary(Arc<TrajectoryDictionary>);

/// Opaque agent endpoint answering cost queries from its own maps.
pub struct TrajexEndpoint(AgentEndpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: TrajexStatus, msg: impl Into<String>) -> TrajexStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> TrajexStatus {
    let status = match e {
        Error::Config(_) => TrajexStatus::Config,
        Error::Shape(_) => TrajexStatus::Shape,
        Error::Horizon(_) => TrajexStatus::Horizon,
        Error::Protocol(_) => TrajexStatus::Protocol,
        Error::Decode { .. } => TrajexStatus::Decode,
        Error::Generation { .. } => TrajexStatus::Generation,
        Error::Io(_) => TrajexStatus::Io,
        Error::Serde(_) => TrajexStatus::Serde,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), TrajexStatus>) -> TrajexStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TrajexStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(TrajexStatus::Panic, "internal panic"),
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), TrajexStatus> {
    if p.is_null() {
        Err(fail(TrajexStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], TrajexStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn write_out(
    bytes: &[u8],
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> Result<(), TrajexStatus> {
    non_null(out_len, "out_len")?;
    *out_len = bytes.len();
    if cap < bytes.len() {
        return Err(fail(
            TrajexStatus::BufferTooSmall,
            format!("need {} bytes, buffer holds {cap}", bytes.len()),
        ));
    }
    non_null(out, "out")?;
    ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the next call on
/// this thread.
#[no_mangle]
pub extern "C" fn trajex_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds the speed-by-curvature dictionary. Zero arguments take the defaults.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn trajex_dictionary_new(
    n_speeds: usize,
    n_curvatures: usize,
    horizon: usize,
    out: *mut *mut TrajexDictionary,
) -> TrajexStatus {
    guard(|| {
        non_null(out, "out")?;
        let d = DictionaryConfig::default();
        let cfg = DictionaryConfig {
            n_speeds: if n_speeds == 0 { d.n_speeds } else { n_speeds },
            n_curvatures: if n_curvatures == 0 {
                d.n_curvatures
            } else {
                n_curvatures
            },
            horizon: if horizon == 0 { d.horizon } else { horizon },
            ..d
        };
        let dict = generate_dictionary(&cfg).map_err(from_error)?;
        *out = Box::into_raw(Box::new(TrajexDictionary(Arc::new(dict))));
        Ok(())
    })
}

/// # Safety
/// `dict` must come from [`trajex_dictionary_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn trajex_dictionary_free(dict: *mut TrajexDictionary) {
    if !dict.is_null() {
        drop(Box::from_raw(dict));
    }
}

/// # Safety
/// `dict` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn trajex_dictionary_id(dict: *const TrajexDictionary) -> u32 {
    dict.as_ref().map_or(0, |d| d.0.id)
}

/// # Safety
/// `dict` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn trajex_dictionary_len(dict: *const TrajexDictionary) -> usize {
    dict.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `dict` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn trajex_dictionary_horizon(dict: *const TrajexDictionary) -> usize {
    dict.as_ref().map_or(0, |d| d.0.horizon)
}

/// Copies the waypoints of entry `index` as `x0, y0, x1, y1, ...` into `out`, which must
/// hold `2 * horizon` doubles.
///
/// # Safety
/// `dict` must be a live handle and `out` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn trajex_dictionary_waypoints(
    dict: *const TrajexDictionary,
    index: usize,
    out: *mut f64,
    cap: usize,
) -> TrajexStatus {
    guard(|| {
        non_null(dict, "dict")?;
        let d = &(*dict).0;
        let entry = d.entries.get(index).ok_or_else(|| {
            fail(
                TrajexStatus::Config,
                format!("index {index} out of range 0..{}", d.len()),
            )
        })?;
        let flat: Vec<f64> = entry.waypoints.iter().flat_map(|p| [p[0], p[1]]).collect();
        if cap < flat.len() {
            return Err(fail(
                TrajexStatus::BufferTooSmall,
                format!("need {} doubles", flat.len()),
            ));
        }
        non_null(out, "out")?;
        ptr::copy_nonoverlapping(flat.as_ptr(), out, flat.len());
        Ok(())
    })
}

/// Writes the 29-byte query of agent `ego_id` at global pose `(x, y, theta)`.
///
/// # Safety
/// `dict` must be a live handle; `out` must hold `cap` bytes and `out_len` be writable.
#[no_mangle]
pub unsafe extern "C" fn trajex_encode_query(
    dict: *const TrajexDictionary,
    ego_id: u32,
    x: f64,
    y: f64,
    theta: f64,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> TrajexStatus {
    guard(|| {
        non_null(dict, "dict")?;
        let q = CostQuery::new(ego_id, &Pose2::new(x, y, theta), &(*dict).0).map_err(from_error)?;
        write_out(&trajex::exchange::encode_query(&q), out, cap, out_len)
    })
}

/// Creates an endpoint from a class forecast on a grid centered on the agent.
///
/// `probs` holds `horizon * height * width * 3` doubles: step-major, then row-major cells,
/// each `(p_null, p_ego, p_allo)`. `view` is null or `height * width` bytes, nonzero where
/// the agent observed the cell. The agent's own class is ignored when it queries itself.
///
/// # Safety
/// `dict` must be a live handle, the arrays must have the stated lengths and `out` must be
/// a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn trajex_endpoint_new(
    id: u32,
    x: f64,
    y: f64,
    theta: f64,
    dict: *const TrajexDictionary,
    width: usize,
    height: usize,
    resolution: f64,
    horizon: usize,
    probs: *const f64,
    view: *const u8,
    threshold: f64,
    d_sat: f64,
    out: *mut *mut TrajexEndpoint,
) -> TrajexStatus {
    guard(|| {
        non_null(dict, "dict")?;
        non_null(out, "out")?;
        let spec = GridSpec::centered(width, height, resolution).map_err(from_error)?;
        let cells = width * height;
        let flat = input(probs, horizon * cells * NUM_CLASSES, "probs")?;
        let planes = (0..horizon)
            .map(|t| {
                let data = (0..cells)
                    .map(|c| {
                        let i = (t * cells + c) * NUM_CLASSES;
                        [flat[i], flat[i + 1], flat[i + 2]]
                    })
                    .collect();
                Raster::from_vec(width, height, data)
            })
            .collect::<trajex::Result<Vec<_>>>()
            .map_err(from_error)?;
        let forecast = OccupancyForecast::new(spec, planes).map_err(from_error)?;
        let shared = signed_distance(&binarize_with(&forecast, threshold, true), d_sat)
            .map_err(from_error)?;
        let own = signed_distance(&binarize_with(&forecast, threshold, false), d_sat)
            .map_err(from_error)?;
        let view = if view.is_null() {
            None
        } else {
            let mask = input(view, cells, "view")?
                .iter()
                .map(|&v| v != 0)
                .collect();
            Some(Arc::new(
                Raster::from_vec(width, height, mask).map_err(from_error)?,
            ))
        };
        let endpoint = AgentEndpoint {
            id,
            pose: Pose2::new(x, y, theta),
            costmaps: Arc::new(FixedCostmaps {
                owner: id,
                shared: Arc::new(shared),
                own: Arc::new(own),
            }),
            entropy: Arc::new(entropy(&forecast)),
            view,
            dictionary: Arc::clone(&(*dict).0),
        };
        *out = Box::into_raw(Box::new(TrajexEndpoint(endpoint)));
        Ok(())
    })
}

/// # Safety
/// `endpoint` must come from [`trajex_endpoint_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn trajex_endpoint_free(endpoint: *mut TrajexEndpoint) {
    if !endpoint.is_null() {
        drop(Box::from_raw(endpoint));
    }
}

/// Answers an encoded query with an encoded response. A response with a nonzero status
/// byte is still written and still returns `Ok`. When `cap` is too small, `out_len`
/// receives the required size.
///
/// # Safety
/// `endpoint` must be a live handle, `query` must hold `query_len` bytes, `out` must hold
/// `cap` bytes and `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trajex_endpoint_answer(
    endpoint: *const TrajexEndpoint,
    query: *const u8,
    query_len: usize,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> TrajexStatus {
    guard(|| {
        non_null(endpoint, "endpoint")?;
        let bytes = input(query, query_len, "query")?;
        if bytes.len() != QUERY_LEN {
            return Err(fail(
                TrajexStatus::Decode,
                format!("query must be {QUERY_LEN} bytes"),
            ));
        }
        let q = decode_query(bytes).map_err(from_error)?;
        write_out(
            &encode_response(&(*endpoint).0.handle_query(&q)),
            out,
            cap,
            out_len,
        )
    })
}

/// Fuses `count` encoded responses for an `n × t` dictionary. Writes `n` scores (the
/// sentinel `DBL_MAX` where no agent had a valid sample) and the `n` trajectory indices in
/// ascending score order.
///
/// # Safety
/// `responses` and `lens` must hold `count` entries each, every response pointer must hold
/// its length in bytes, and `scores` and `order` must each hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn trajex_fuse(
    responses: *const *const u8,
    lens: *const usize,
    count: usize,
    n: usize,
    t: usize,
    mode: TrajexFusionMode,
    entropy_floor: f64,
    scores: *mut f64,
    order: *mut u32,
) -> TrajexStatus {
    guard(|| {
        let ptrs = input(responses, count, "responses")?;
        let lens = input(lens, count, "lens")?;
        let decoded = ptrs
            .iter()
            .zip(lens)
            .map(|(&p, &len)| {
                input(p, len, "response").and_then(|b| decode_response(b).map_err(from_error))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let config = PipelineConfig {
            fusion_mode: match mode {
                TrajexFusionMode::WeightedMean => FusionMode::WeightedMean,
                TrajexFusionMode::VerbatimSum => FusionMode::VerbatimSum,
            },
            entropy_floor,
            ..Default::default()
        };
        let ranking = fuse(&decoded, n, t, &config).map_err(from_error)?;
        non_null(scores, "scores")?;
        non_null(order, "order")?;
        for (i, (&s, &o)) in ranking.scores.iter().zip(&ranking.order).enumerate() {
            *scores.add(i) = s;
            *order.add(i) = o as u32;
        }
        Ok(())
    })
}
