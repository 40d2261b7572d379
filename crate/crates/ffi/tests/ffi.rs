use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;
use std::sync::Arc;

use trajex::exchange::{decode_response, fuse, AgentEndpoint, CostQuery, PipelineConfig};
use trajex::geometry::Pose2;
use trajex::grid::{binarize, entropy, signed_distance, GridSpec, OccupancyForecast, Raster};
use trajex::trajectory::{generate_dictionary, DictionaryConfig};
use trajex_ffi::*;

const W: usize = 40;
const H: usize = 40;
const RES: f64 = 0.5;
const HORIZON: usize = 5;

/// Null everywhere except an allo block ahead of the agent.
fn probs() -> Vec<f64> {
    let mut out = Vec::with_capacity(HORIZON * W * H * 3);
    for _ in 0..HORIZON {
        for y in 0..H {
            for x in 0..W {
                let block = (28..32).contains(&x) && (18..22).contains(&y);
                out.extend_from_slice(if block {
                    &[0.1, 0.0, 0.9]
                } else {
                    &[0.8, 0.1, 0.1]
                });
            }
        }
    }
    out
}

fn last_error() -> String {
    let p = trajex_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_dict() -> *mut TrajexDictionary {
    let mut d = ptr::null_mut();
    assert_eq!(
        unsafe { trajex_dictionary_new(0, 0, 0, &mut d) },
        TrajexStatus::Ok
    );
    d
}

fn new_endpoint(
    dict: *const TrajexDictionary,
    id: u32,
    pose: [f64; 3],
    p: &[f64],
) -> *mut TrajexEndpoint {
    let mut e = ptr::null_mut();
    let status = unsafe {
        trajex_endpoint_new(
            id,
            pose[0],
            pose[1],
            pose[2],
            dict,
            W,
            H,
            RES,
            HORIZON,
            p.as_ptr(),
            ptr::null(),
            0.5,
            3.0,
            &mut e,
        )
    };
    assert_eq!(status, TrajexStatus::Ok);
    e
}

#[test]
fn dictionary_matches_the_library() {
    let d = new_dict();
    let core = generate_dictionary(&DictionaryConfig::default()).unwrap();
    unsafe {
        assert_eq!(trajex_dictionary_id(d), core.id);
        assert_eq!(trajex_dictionary_len(d), 80);
        assert_eq!(trajex_dictionary_horizon(d), 15);
        let mut buf = vec![0.0; 30];
        assert_eq!(
            trajex_dictionary_waypoints(d, 17, buf.as_mut_ptr(), 30),
            TrajexStatus::Ok
        );
        let expect: Vec<f64> = core.entries[17]
            .waypoints
            .iter()
            .flat_map(|p| [p[0], p[1]])
            .collect();
        assert_eq!(buf, expect);
        assert_eq!(
            trajex_dictionary_waypoints(d, 17, buf.as_mut_ptr(), 29),
            TrajexStatus::BufferTooSmall
        );
        assert_eq!(
            trajex_dictionary_waypoints(d, 80, buf.as_mut_ptr(), 30),
            TrajexStatus::Config
        );
        assert!(last_error().contains("out of range"));
        trajex_dictionary_free(d);
    }
}

#[test]
fn round_matches_the_library_pipeline() {
    let d = new_dict();
    let p = probs();
    let ego = [3.0, -2.0, 0.4];
    let other = [6.0, 1.0, -0.3];
    let e0 = new_endpoint(d, 0, ego, &p);
    let e1 = new_endpoint(d, 1, other, &p);

    let mut query = [0u8; 29];
    let mut qlen = 0;
    let mut bufs = vec![vec![0u8; 10_810]; 2];
    let mut lens = [0usize; 2];
    let mut scores = vec![0.0; 80];
    let mut order = vec![0u32; 80];
    unsafe {
        assert_eq!(
            trajex_encode_query(
                d,
                0,
                ego[0],
                ego[1],
                ego[2],
                query.as_mut_ptr(),
                29,
                &mut qlen
            ),
            TrajexStatus::Ok
        );
        assert_eq!(qlen, 29);
        for (i, e) in [e0, e1].into_iter().enumerate() {
            let s = trajex_endpoint_answer(
                e,
                query.as_ptr(),
                qlen,
                bufs[i].as_mut_ptr(),
                bufs[i].len(),
                &mut lens[i],
            );
            assert_eq!(s, TrajexStatus::Ok);
            assert_eq!(lens[i], 10_810);
        }
        let ptrs: Vec<*const u8> = bufs.iter().map(|b| b.as_ptr()).collect();
        let s = trajex_fuse(
            ptrs.as_ptr(),
            lens.as_ptr(),
            2,
            80,
            15,
            TrajexFusionMode::WeightedMean,
            1e-3,
            scores.as_mut_ptr(),
            order.as_mut_ptr(),
        );
        assert_eq!(s, TrajexStatus::Ok);
    }

    // Same round through the library, with the self map built without the ego class.
    let dict = Arc::new(generate_dictionary(&DictionaryConfig::default()).unwrap());
    let spec = GridSpec::centered(W, H, RES).unwrap();
    let planes = (0..HORIZON)
        .map(|t| {
            let cells = (0..W * H).map(|c| {
                let i = (t * W * H + c) * 3;
                [p[i], p[i + 1], p[i + 2]]
            });
            Raster::from_vec(W, H, cells.collect()).unwrap()
        })
        .collect();
    let forecast = OccupancyForecast::new(spec, planes).unwrap();
    let shared = Arc::new(signed_distance(&binarize(&forecast, 0.5), 3.0).unwrap());
    let ent = Arc::new(entropy(&forecast));
    let endpoint = |id: u32, pose: [f64; 3]| {
        AgentEndpoint::with_costmap(
            id,
            Pose2::new(pose[0], pose[1], pose[2]),
            Arc::clone(&shared),
            Arc::clone(&ent),
            Arc::clone(&dict),
        )
    };
    let q = CostQuery::new(0, &Pose2::new(ego[0], ego[1], ego[2]), &dict).unwrap();
    // Only the other agent's answer is comparable: the library endpoint here keeps the ego class.
    let lib_other = endpoint(1, other).handle_query(&q);
    assert_eq!(decode_response(&bufs[1]).unwrap(), lib_other);
    let responses = [decode_response(&bufs[0]).unwrap(), lib_other];
    let ranking = fuse(&responses, 80, 15, &PipelineConfig::default()).unwrap();
    assert_eq!(ranking.scores, scores);
    assert_eq!(
        ranking.order,
        order.iter().map(|&o| o as usize).collect::<Vec<_>>()
    );

    unsafe {
        trajex_endpoint_free(e0);
        trajex_endpoint_free(e1);
        trajex_dictionary_free(d);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let d = new_dict();
    let p = probs();
    let e = new_endpoint(d, 0, [0.0; 3], &p);
    let mut out = vec![0u8; 16];
    let mut len = 0;
    unsafe {
        assert_eq!(
            trajex_dictionary_new(0, 0, 0, ptr::null_mut()),
            TrajexStatus::NullPointer
        );
        assert!(last_error().contains("null"));

        let mut query = [0u8; 29];
        trajex_encode_query(d, 3, 1.0, 1.0, 0.0, query.as_mut_ptr(), 29, &mut len);
        assert_eq!(
            trajex_encode_query(d, 3, 1.0, 1.0, 0.0, query.as_mut_ptr(), 28, &mut len),
            TrajexStatus::BufferTooSmall
        );
        assert_eq!(len, 29);
        assert_eq!(
            trajex_endpoint_answer(e, query.as_ptr(), 28, out.as_mut_ptr(), 16, &mut len),
            TrajexStatus::Decode
        );
        assert_eq!(
            trajex_endpoint_answer(e, query.as_ptr(), 29, out.as_mut_ptr(), 16, &mut len),
            TrajexStatus::BufferTooSmall
        );
        assert_eq!(len, 10_810);
        query[0] ^= 0xff;
        assert_eq!(
            trajex_endpoint_answer(e, query.as_ptr(), 29, out.as_mut_ptr(), 16, &mut len),
            TrajexStatus::Decode
        );
        assert!(last_error().contains("byte offset 0"));

        let mut bad = p.clone();
        bad[0] = 0.9;
        let mut slot = ptr::null_mut();
        let s = trajex_endpoint_new(
            0,
            0.0,
            0.0,
            0.0,
            d,
            W,
            H,
            RES,
            HORIZON,
            bad.as_ptr(),
            ptr::null(),
            0.5,
            3.0,
            &mut slot,
        );
        assert_eq!(s, TrajexStatus::Shape);
        assert!(slot.is_null());
        let s = trajex_endpoint_new(
            0,
            0.0,
            0.0,
            0.0,
            d,
            W,
            H,
            RES,
            0,
            p.as_ptr(),
            ptr::null(),
            0.5,
            3.0,
            &mut slot,
        );
        assert_eq!(s, TrajexStatus::Horizon);

        let (mut scores, mut order) = ([0.0; 80], [0u32; 80]);
        let s = trajex_fuse(
            ptr::null(),
            ptr::null(),
            0,
            80,
            15,
            TrajexFusionMode::VerbatimSum,
            1e-3,
            scores.as_mut_ptr(),
            order.as_mut_ptr(),
        );
        assert_eq!(s, TrajexStatus::Protocol);

        trajex_endpoint_free(e);
        trajex_dictionary_free(d);
        trajex_dictionary_free(ptr::null_mut());
    }
}

#[test]
fn view_mask_invalidates_unseen_samples() {
    let d = new_dict();
    let p = probs();
    let view = vec![0u8; W * H];
    let mut e = ptr::null_mut();
    let mut query = [0u8; 29];
    let mut out = vec![0u8; 10_810];
    let mut len = 0;
    unsafe {
        let s = trajex_endpoint_new(
            1,
            0.0,
            0.0,
            0.0,
            d,
            W,
            H,
            RES,
            HORIZON,
            p.as_ptr(),
            view.as_ptr(),
            0.5,
            3.0,
            &mut e,
        );
        assert_eq!(s, TrajexStatus::Ok);
        trajex_encode_query(d, 0, 0.0, 0.0, 0.0, query.as_mut_ptr(), 29, &mut len);
        assert_eq!(
            trajex_endpoint_answer(e, query.as_ptr(), 29, out.as_mut_ptr(), out.len(), &mut len),
            TrajexStatus::Ok
        );
        trajex_endpoint_free(e);
        trajex_dictionary_free(d);
    }
    assert!(decode_response(&out)
        .unwrap()
        .records
        .iter()
        .all(|r| !r.valid));
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(manifest_dir().join("include/trajex.h")).unwrap();
    let source = std::fs::read_to_string(manifest_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert_eq!(exports.len(), 12);
    for name in exports {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    assert!(header.contains("typedef struct TrajexEndpoint TrajexEndpoint;"));
}

const C_SMOKE: &str = r#"
#include <stdio.h>
#include "trajex.h"

int main(void) {
    TrajexDictionary *d = NULL;
    if (trajex_dictionary_new(0, 0, 0, &d) != TRAJEX_STATUS_OK) return 1;
    uint8_t q[29];
    size_t n = 0;
    if (trajex_encode_query(d, 7, 1.0, 2.0, 0.5, q, sizeof q, &n) != TRAJEX_STATUS_OK || n != 29) return 2;
    if (trajex_dictionary_new(0, 0, 0, NULL) != TRAJEX_STATUS_NULL_POINTER) return 3;
    printf("%zu %s\n", trajex_dictionary_len(d), trajex_last_error());
    trajex_dictionary_free(d);
    return 0;
}
"#;

/// Directory holding the built `libtrajex_ffi.a`, next to this test's `deps` directory.
fn artifact_dir() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?.to_path_buf();
    dir.join("libtrajex_ffi.a").exists().then_some(dir)
}

#[test]
fn c_program_links_against_the_header() {
    let (Some(lib), Ok(tmp)) = (artifact_dir(), tempfile::tempdir()) else {
        eprintln!("static library not built; skipping");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let src = tmp.path().join("smoke.c");
    let bin = tmp.path().join("smoke");
    std::fs::write(&src, C_SMOKE).unwrap();
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest_dir().join("include"))
        .arg(lib.join("libtrajex_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(Path::new(&bin)).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        "80 out is null"
    );
}
