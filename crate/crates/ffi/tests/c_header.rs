use std::path::{Path, PathBuf};
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

// target/<profile>/deps/<test> -> target/<profile>
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/byrd_nafl.h")).unwrap();
    for name in [
        "ByrdStatus",
        "BYRD_STATUS_OK",
        "ByrdServer",
        "byrd_last_error",
        "byrd_aggregate",
        "byrd_apply_attack",
        "byrd_server_new",
        "byrd_server_step",
        "byrd_server_params",
        "byrd_server_iteration",
        "byrd_server_free",
        "byrd_max_stepsize",
        "byrd_error_floor_bound",
        "byrd_run_config",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn c_program_links_and_runs() {
    if !have_cc() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let lib = profile_dir().join("libbyrd_nafl_ffi.a");
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let mut cmd = Command::new("cc");
    cmd.arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(crate_dir().join("tests/c/smoke.c"));
    if !lib.exists() {
        eprintln!("static library not built; checking the header compiles only");
        let o = cmd.arg("-fsyntax-only").output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        return;
    }
    let o = cmd
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stdout));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
