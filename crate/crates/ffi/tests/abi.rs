use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

use actorgraph_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ag_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn config_roundtrip_and_validation() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(ag_config_new(&mut cfg), AgStatus::Ok);
        assert_eq!(ag_config_set(cfg, c("bptt_window").as_ptr(), c("4").as_ptr()), AgStatus::Ok);

        let mut buf = [0 as c_char; 32];
        let mut needed = 0usize;
        let key = c("bptt_window");
        assert_eq!(ag_config_get(cfg, key.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut needed), AgStatus::Ok);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), "4");
        assert_eq!(needed, 2);

        assert_eq!(ag_config_get(cfg, key.as_ptr(), buf.as_mut_ptr(), 1, &mut needed), AgStatus::BufferTooSmall);

        assert_eq!(ag_config_set(cfg, c("bptt_window").as_ptr(), c("0").as_ptr()), AgStatus::Config);
        assert!(!last_error().is_empty());
        // A rejected value leaves the old one in place.
        assert_eq!(ag_config_get(cfg, key.as_ptr(), buf.as_mut_ptr(), buf.len(), ptr::null_mut()), AgStatus::Ok);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), "4");
        assert!(ag_last_error_message().is_null());

        assert_ne!(ag_config_set(cfg, c("no_such_key").as_ptr(), c("1").as_ptr()), AgStatus::Ok);
        ag_config_free(cfg);
    }
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        assert_eq!(ag_config_new(ptr::null_mut()), AgStatus::NullArgument);
        assert!(last_error().contains("out"));
        let mut s = ptr::null_mut();
        assert_eq!(ag_stream_open(ptr::null(), &mut s), AgStatus::NullArgument);
        ag_config_free(ptr::null_mut());
        ag_stream_close(ptr::null_mut());
        ag_frame_free(ptr::null_mut());
    }
}

#[test]
fn missing_stream_is_io_error() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(ag_stream_open(c("/nonexistent/x.mapf").as_ptr(), &mut s), AgStatus::Io);
        assert!(last_error().contains("nonexistent"));
    }
}

#[test]
fn hungarian_rectangular() {
    let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
    let mut a = [0i64; 3];
    unsafe {
        assert_eq!(ag_hungarian(cost.as_ptr(), 3, 3, a.as_mut_ptr()), AgStatus::Ok);
    }
    assert_eq!(a, [1, 0, 2]);

    let tall = [1.0, 5.0, 9.0];
    let mut b = [0i64; 3];
    unsafe {
        assert_eq!(ag_hungarian(tall.as_ptr(), 3, 1, b.as_mut_ptr()), AgStatus::Ok);
    }
    assert_eq!(b, [0, -1, -1]);

    let bad = [f64::NAN];
    unsafe {
        assert_ne!(ag_hungarian(bad.as_ptr(), 1, 1, b.as_mut_ptr()), AgStatus::Ok);
    }
}

#[test]
fn full_pipeline_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap();
    unsafe {
        assert_eq!(ag_synth(c(root).as_ptr(), 2, 8, 0.05, 3), AgStatus::Ok, "{}", last_error());

        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".mapf"))
            .collect();
        names.sort();
        assert_eq!(names.len(), 4);
        let streams: Vec<CString> = names.iter().map(|n| c(&format!("{root}/{n}"))).collect();
        let truths: Vec<CString> = names
            .iter()
            .map(|n| c(&format!("{root}/{}", n.replace(".mapf", ".gt.txt"))))
            .collect();
        let stream_ptrs: Vec<*const c_char> = streams.iter().map(|s| s.as_ptr()).collect();
        let truth_ptrs: Vec<*const c_char> = truths.iter().map(|s| s.as_ptr()).collect();

        // Walk the first stream frame by frame.
        let mut s = ptr::null_mut();
        assert_eq!(ag_stream_open(stream_ptrs[0], &mut s), AgStatus::Ok);
        let mut dims = AgStreamDims::default();
        assert_eq!(ag_stream_dims(s, &mut dims), AgStatus::Ok);
        let mut frames = 0;
        loop {
            let mut f = ptr::null_mut();
            let st = ag_stream_next(s, &mut f);
            if st == AgStatus::EndOfStream {
                assert!(f.is_null());
                break;
            }
            assert_eq!(st, AgStatus::Ok);
            let (mut idx, mut n) = (0u32, 0u32);
            assert_eq!(ag_frame_info(f, &mut idx, &mut n), AgStatus::Ok);
            assert_eq!(idx, frames);
            assert!(n > 0);
            let (mut bbox, mut score, mut class) = ([0f32; 4], 0f32, 0u32);
            assert_eq!(ag_frame_roi(f, 0, bbox.as_mut_ptr(), &mut score, &mut class), AgStatus::Ok);
            assert!(bbox[0] <= bbox[2] && bbox[1] <= bbox[3]);
            assert_ne!(ag_frame_roi(f, n, bbox.as_mut_ptr(), &mut score, &mut class), AgStatus::Ok);
            let len = (dims.channels * dims.height * dims.width) as usize;
            let mut map = vec![0f32; len];
            assert_eq!(ag_frame_global_map(f, map.as_mut_ptr(), len), AgStatus::Ok);
            assert_eq!(ag_frame_global_map(f, map.as_mut_ptr(), len - 1), AgStatus::BufferTooSmall);
            ag_frame_free(f);
            frames += 1;
        }
        assert_eq!(frames, 8);
        ag_stream_close(s);

        let ck = c(&format!("{root}/model.ck"));
        let mut read = 0u64;
        assert_eq!(
            ag_train(ptr::null(), stream_ptrs.as_ptr(), stream_ptrs.len(), ck.as_ptr(), &mut read),
            AgStatus::Ok,
            "{}",
            last_error()
        );
        assert_eq!(read, 32);

        let preds = c(&format!("{root}/preds.txt"));
        assert_eq!(
            ag_infer(ck.as_ptr(), ptr::null(), stream_ptrs.as_ptr(), stream_ptrs.len(), preds.as_ptr()),
            AgStatus::Ok,
            "{}",
            last_error()
        );

        let mut report = AgReport::default();
        assert_eq!(
            ag_eval(preds.as_ptr(), truth_ptrs.as_ptr(), truth_ptrs.len(), &mut report),
            AgStatus::Ok,
            "{}",
            last_error()
        );
        for v in [
            report.group_activity_mca,
            report.group_activity_accuracy,
            report.action_detection_map,
            report.membership_accuracy,
            report.social_activity_accuracy,
            report.video_map,
        ] {
            assert!((0.0..=1.0).contains(&v));
        }

        // Ground truth scored as predictions is a format error: it is not a prediction file.
        assert_eq!(ag_eval(truth_ptrs[0], truth_ptrs.as_ptr(), 1, &mut report), AgStatus::Format);
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(ag_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}
