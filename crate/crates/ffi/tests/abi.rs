use oscilab_ffi::*;
use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::ptr;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { oscilab_last_error(buf.as_mut_ptr(), buf.len(), ptr::null_mut()) };
    unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn threshold_through_the_abi() {
    let (mut num, mut den) = (0i64, 0i64);
    assert_eq!(unsafe { oscilab_threshold(3, &mut num, &mut den) }, OscilabStatus::Ok);
    assert_eq!((num, den), (10, 3));
    assert_eq!(unsafe { oscilab_threshold(2, &mut num, &mut den) }, OscilabStatus::Precondition);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { oscilab_threshold(3, ptr::null_mut(), &mut den) }, OscilabStatus::NullPointer);
}

#[test]
fn config_errors_are_reported() {
    let mut cfg = ptr::null_mut();
    let bad = CString::new(r#"{"experiment":"nope","params":{}}"#).unwrap();
    assert_eq!(unsafe { oscilab_config_from_json(bad.as_ptr(), &mut cfg) }, OscilabStatus::Config);
    assert!(cfg.is_null());
    assert_eq!(unsafe { oscilab_config_from_json(ptr::null(), &mut cfg) }, OscilabStatus::NullPointer);
    let bad_q = CString::new(r#"{"experiment":"example-elliptic","params":{"q":"ten"}}"#).unwrap();
    assert_eq!(unsafe { oscilab_config_from_json(bad_q.as_ptr(), &mut cfg) }, OscilabStatus::Config);
}

#[test]
fn run_hash_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let json = CString::new(r#"{"experiment":"thresholds","params":{"n":[3,4,5]},"seed":2}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { oscilab_config_from_json(json.as_ptr(), &mut cfg) }, OscilabStatus::Ok);

    let mut needed = 0usize;
    let mut small = [0 as c_char; 8];
    assert_eq!(unsafe { oscilab_config_hash(cfg, small.as_mut_ptr(), small.len(), &mut needed) }, OscilabStatus::BufferTooSmall);
    assert_eq!(needed, 65);
    let mut hash = vec![0 as c_char; needed];
    assert_eq!(unsafe { oscilab_config_hash(cfg, hash.as_mut_ptr(), hash.len(), ptr::null_mut()) }, OscilabStatus::Ok);

    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { oscilab_run(cfg, out.as_ptr(), 2, &mut res) }, OscilabStatus::Ok);
    assert_eq!(unsafe { oscilab_result_passed(res) }, 1);
    assert_eq!(unsafe { oscilab_result_rows(res) }, 3);
    let mut buf = vec![0 as c_char; 1 << 16];
    assert_eq!(unsafe { oscilab_result_json(res, buf.as_mut_ptr(), buf.len(), ptr::null_mut()) }, OscilabStatus::Ok);
    let record = unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string();
    let h = unsafe { std::ffi::CStr::from_ptr(hash.as_ptr()) }.to_str().unwrap().to_string();
    assert!(record.contains(&h));

    let path = CString::new(dir.path().join("thresholds.json").to_str().unwrap()).unwrap();
    let mut identical = 0;
    assert_eq!(unsafe { oscilab_replay(path.as_ptr(), 1, &mut identical) }, OscilabStatus::Ok);
    assert_eq!(identical, 1);

    unsafe {
        oscilab_result_free(res);
        oscilab_config_free(cfg);
        oscilab_result_free(ptr::null_mut());
    }
    assert_eq!(unsafe { oscilab_result_passed(ptr::null()) }, -1);
}

#[test]
fn tube_family_handle() {
    let mut fam = ptr::null_mut();
    assert_eq!(unsafe { oscilab_tube_family_curved(0.25, true, &mut fam) }, OscilabStatus::Ok);
    assert!(unsafe { oscilab_tube_family_len(fam) } > 0);
    let mut v = 0.0;
    assert_eq!(unsafe { oscilab_tube_family_union_volume(fam, 0.125, &mut v) }, OscilabStatus::Ok);
    assert!(v > 0.0);
    assert_eq!(unsafe { oscilab_tube_family_union_volume(fam, -1.0, &mut v) }, OscilabStatus::Precondition);
    unsafe { oscilab_tube_family_free(fam) };
    assert_eq!(unsafe { oscilab_tube_family_curved(-1.0, true, &mut fam) }, OscilabStatus::Precondition);
}

#[test]
fn header_declares_the_abi_and_compiles() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/oscilab.h")).unwrap();
    for sym in ["oscilab_run", "oscilab_replay", "oscilab_config_free", "OSCILAB_STATUS_BUFFER_TOO_SMALL", "typedef struct OscilabConfig"] {
        assert!(header.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"oscilab.h\"\nint f(void) { int64_t n, d; return oscilab_threshold(3, &n, &d) == OSCILAB_STATUS_OK; }\n",
    )
    .unwrap();
    match std::process::Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(root.join("include")).arg(&src).status() {
        Ok(s) => assert!(s.success(), "header does not compile as C"),
        Err(_) => eprintln!("no C compiler; skipped syntax check"),
    }
}
