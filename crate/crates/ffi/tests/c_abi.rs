use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use bid_core::criteria::{BackwardConfig, ForwardConfig};
use bid_core::decoder::bid_choose;
use bid_core::ActionChunk;
use bid_ffi::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn new_selector(len: usize, dim: usize, k: usize) -> *mut BidSelector {
    let mut p = bid_selector_default_params();
    p.chunk_len = len;
    p.action_dim = dim;
    p.mode_size = k;
    let mut sel = ptr::null_mut();
    assert_eq!(unsafe { bid_selector_new(&p, &mut sel) }, BidStatus::Ok);
    assert!(!sel.is_null());
    sel
}

fn last_error() -> String {
    let p = bid_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn to_chunks(flat: &[f64], n: usize, start: usize, len: usize, dim: usize) -> Vec<ActionChunk> {
    flat.chunks(len * dim)
        .take(n)
        .map(|b| ActionChunk::from_rows(start, b.chunks(dim).map(<[f64]>::to_vec).collect()).unwrap())
        .collect()
}

#[test]
fn selection_matches_the_core_library_over_an_episode() {
    let (len, dim, n, k) = (6, 2, 12, 4);
    let sel = new_selector(len, dim, k);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut prev: Option<ActionChunk> = None;
    let fwd = ForwardConfig::new(k, n).unwrap();
    for tick in 0..20 {
        let strong: Vec<f64> = (0..n * len * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let weak: Vec<f64> = (0..n * len * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (mut idx, mut chunk) = (usize::MAX, vec![0.0; len * dim]);
        let (mut lb, mut lf) = (vec![0.0; n], vec![0.0; n]);
        let status = unsafe {
            bid_selector_select(
                sel,
                tick,
                strong.as_ptr(),
                n,
                weak.as_ptr(),
                n,
                &mut idx,
                chunk.as_mut_ptr(),
                lb.as_mut_ptr(),
                lf.as_mut_ptr(),
            )
        };
        assert_eq!(status, BidStatus::Ok);
        assert!(bid_last_error_message().is_null());

        let s = to_chunks(&strong, n, tick, len, dim);
        let w = to_chunks(&weak, n, tick, len, dim);
        let want = bid_choose(&s, &w, prev.as_ref(), &BackwardConfig::default(), &fwd).unwrap();
        assert_eq!(idx, want.chosen);
        assert_eq!(lb, want.backward);
        assert_eq!(lf, want.forward);
        assert_eq!(&chunk[..], &strong[idx * len * dim..(idx + 1) * len * dim]);
        prev = Some(s[idx].clone());
    }
    unsafe { bid_selector_free(sel) };
}

#[test]
fn reset_and_skipped_ticks_drop_the_previous_decision() {
    let sel = new_selector(3, 1, 1);
    let weak = [0.0, 0.0, 0.0];
    let first = [7.0, 7.0, 7.0];
    let mut idx = 0;
    let mut lb = [0.0; 2];
    unsafe {
        bid_selector_select(sel, 0, first.as_ptr(), 1, weak.as_ptr(), 1, &mut idx, ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    }
    let next = [7.0, 7.0, 7.0, 0.0, 0.0, 0.0];
    let call = |tick: usize, lb: &mut [f64; 2]| unsafe {
        bid_selector_select(sel, tick, next.as_ptr(), 2, weak.as_ptr(), 1, &mut 0, ptr::null_mut(), lb.as_mut_ptr(), ptr::null_mut())
    };
    assert_eq!(call(1, &mut lb), BidStatus::Ok);
    assert!(lb[1] > 0.0);

    unsafe { bid_selector_reset(sel) };
    assert_eq!(call(2, &mut lb), BidStatus::Ok);
    assert_eq!(lb, [0.0, 0.0]);

    // tick 5 does not follow the decision made at tick 2
    assert_eq!(call(5, &mut lb), BidStatus::Ok);
    assert_eq!(lb, [0.0, 0.0]);
    unsafe { bid_selector_free(sel) };
}

#[test]
fn ema_blends_the_overlap() {
    let mut p = bid_selector_default_params();
    p.chunk_len = 2;
    p.action_dim = 1;
    p.mode_size = 1;
    p.use_ema = 1;
    let mut sel = ptr::null_mut();
    assert_eq!(unsafe { bid_selector_new(&p, &mut sel) }, BidStatus::Ok);
    let weak = [0.0, 0.0];
    let mut out = [0.0; 2];
    unsafe {
        bid_selector_select(sel, 0, [7.0, 0.0].as_ptr(), 1, weak.as_ptr(), 1, &mut 0, out.as_mut_ptr(), ptr::null_mut(), ptr::null_mut());
        bid_selector_select(sel, 1, [4.0, 9.0].as_ptr(), 1, weak.as_ptr(), 1, &mut 0, out.as_mut_ptr(), ptr::null_mut(), ptr::null_mut());
    }
    assert!((out[0] - 3.0).abs() < 1e-12);
    assert_eq!(out[1], 9.0);
    unsafe { bid_selector_free(sel) };
}

#[test]
fn errors_have_codes_and_messages() {
    let mut p = bid_selector_default_params();
    let mut sel = ptr::null_mut();
    assert_eq!(unsafe { bid_selector_new(&p, &mut sel) }, BidStatus::InvalidArgument);
    assert!(sel.is_null());
    assert!(last_error().contains("chunk_len"));

    p.chunk_len = 2;
    p.action_dim = 1;
    p.rho = 1.5;
    assert_eq!(unsafe { bid_selector_new(&p, &mut sel) }, BidStatus::InvalidArgument);
    assert!(last_error().contains("rho"));
    p.rho = 0.9;
    p.use_ema = 1;
    p.ema_lambda = 1.0;
    assert_eq!(unsafe { bid_selector_new(&p, &mut sel) }, BidStatus::InvalidArgument);
    assert_eq!(unsafe { bid_selector_new(ptr::null(), &mut sel) }, BidStatus::NullPointer);
    assert_eq!(unsafe { bid_selector_new(&p, ptr::null_mut()) }, BidStatus::NullPointer);

    let sel = new_selector(2, 1, 1);
    let data = [1.0, 2.0];
    let mut idx = 0;
    let none = ptr::null_mut();
    assert_eq!(
        unsafe { bid_selector_select(sel, 0, data.as_ptr(), 0, data.as_ptr(), 1, &mut idx, none, none, none) },
        BidStatus::Empty
    );
    assert_eq!(
        unsafe { bid_selector_select(sel, 0, data.as_ptr(), 1, data.as_ptr(), 1, ptr::null_mut(), none, none, none) },
        BidStatus::NullPointer
    );
    let nan = [f64::NAN, 0.0];
    assert_eq!(
        unsafe { bid_selector_select(sel, 0, nan.as_ptr(), 1, data.as_ptr(), 1, &mut idx, none, none, none) },
        BidStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { bid_selector_select(ptr::null_mut(), 0, data.as_ptr(), 1, data.as_ptr(), 1, &mut idx, none, none, none) },
        BidStatus::NullPointer
    );
    unsafe { bid_selector_free(sel) };
    unsafe { bid_selector_free(ptr::null_mut()) };
}

#[test]
fn standalone_scores() {
    let mut out = 0.0;
    let cand = [2.0, 2.0, 3.0, 9.0];
    let prev = [0.0, 1.0, 2.0, 3.0];
    assert_eq!(unsafe { bid_backward_coherence(cand.as_ptr(), prev.as_ptr(), 4, 1, 0.5, &mut out) }, BidStatus::Ok);
    assert!((out - 1.0).abs() < 1e-12);

    let p = [0.8, 0.2];
    let q = [0.5, 0.5];
    assert_eq!(unsafe { bid_total_variation(p.as_ptr(), q.as_ptr(), 2, &mut out) }, BidStatus::Ok);
    assert!((out - 0.3).abs() < 1e-12);
    let bad = [0.5, 0.2];
    assert_eq!(unsafe { bid_total_variation(p.as_ptr(), bad.as_ptr(), 2, &mut out) }, BidStatus::InvalidArgument);
    assert!(!last_error().is_empty());

    let v = unsafe { CStr::from_ptr(bid_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libbid_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("running the C compiler");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), format!("ok {}", env!("CARGO_PKG_VERSION")));
}
