use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use nortasp_ffi::*;

fn last_error() -> String {
    let p = nsp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const ROWS: [[u32; 3]; 5] = [[0, 1, 2], [1, 1, 3], [2, 3, 3], [0, 0, 1], [3, 2, 4]];

fn fitted() -> *mut NspModel {
    let flat: Vec<u32> = ROWS.iter().flatten().copied().collect();
    let mut model = ptr::null_mut();
    let st = unsafe { nsp_model_fit(flat.as_ptr(), 5, 3, &mut model) };
    assert_eq!(st, NspStatus::Ok);
    model
}

#[test]
fn fit_sample_and_json_round_trip() {
    let model = fitted();
    assert_eq!(unsafe { nsp_model_dim(model) }, 3);
    let mut a = vec![0u32; 300];
    let mut b = vec![0u32; 300];
    unsafe {
        assert_eq!(nsp_model_sample(model, 100, 9, a.as_mut_ptr(), a.len()), NspStatus::Ok);
        assert_eq!(nsp_model_sample(model, 100, 9, b.as_mut_ptr(), b.len()), NspStatus::Ok);
    }
    assert_eq!(a, b);
    for (i, v) in a.iter().enumerate() {
        assert!(ROWS.iter().any(|r| r[i % 3] == *v));
    }

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { nsp_model_to_json(model, &mut json) }, NspStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { nsp_model_from_json(json, &mut back) }, NspStatus::Ok);
    let mut c = vec![0u32; 300];
    unsafe {
        nsp_model_sample(back, 100, 9, c.as_mut_ptr(), c.len());
        nsp_string_free(json);
        nsp_model_free(back);
        nsp_model_free(model);
    }
    assert_eq!(a, c);
}

#[test]
fn errors_are_reported() {
    let flat = [1u32, 2, 3];
    let mut model = ptr::null_mut();
    let st = unsafe { nsp_model_fit(flat.as_ptr(), 1, 3, &mut model) };
    assert_eq!(st, NspStatus::InvalidInput);
    assert!(model.is_null());
    assert!(last_error().contains("insufficient"), "{}", last_error());

    let st = unsafe { nsp_model_fit(ptr::null(), 2, 3, &mut model) };
    assert_eq!(st, NspStatus::NullPointer);

    let model = fitted();
    let mut small = [0u32; 5];
    let st = unsafe { nsp_model_sample(model, 2, 1, small.as_mut_ptr(), small.len()) };
    assert_eq!(st, NspStatus::BufferTooSmall);
    let bad = CString::new("{not json").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { nsp_model_from_json(bad.as_ptr(), &mut out) }, NspStatus::InvalidInput);
    unsafe { nsp_model_free(model) };
    unsafe { nsp_model_free(ptr::null_mut()) };
}

#[test]
fn emd_through_the_abi() {
    let a = [0.0, 1.0, 2.0];
    let b = [1.0, 2.0, 3.0];
    let mut d = 0.0;
    assert_eq!(unsafe { nsp_emd(a.as_ptr(), 3, b.as_ptr(), 3, &mut d) }, NspStatus::Ok);
    assert!((d - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { nsp_emd(a.as_ptr(), 0, b.as_ptr(), 3, &mut d) }, NspStatus::InvalidInput);
}

const GRID: &str = r#"{
  "substations": [
    {"id": 1, "flooded_flag": false, "fixed_cost": 1, "var_cost": 1, "max_height": 0},
    {"id": 2, "flooded_flag": true, "fixed_cost": 1, "var_cost": 1, "max_height": 3}
  ],
  "buses": [
    {"id": 1, "substation_id": 1, "demand": 0, "gen_min": 0, "gen_max": 10},
    {"id": 2, "substation_id": 2, "demand": 5, "gen_min": 0, "gen_max": 0}
  ],
  "branches": [{"id": 1, "head": 1, "tail": 2, "susceptance": 10, "capacity": 10}],
  "budget": 3,
  "reference_bus": 1
}"#;

#[test]
fn problem_solve_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("grid.json");
    let s = dir.path().join("scen.csv");
    std::fs::write(&g, GRID).unwrap();
    std::fs::write(&s, "2\n1\n3\n0\n2\n").unwrap();
    let gp = CString::new(g.to_str().unwrap()).unwrap();
    let sp = CString::new(s.to_str().unwrap()).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { nsp_problem_load(gp.as_ptr(), sp.as_ptr(), &mut p) }, NspStatus::Ok);
    assert_eq!(unsafe { nsp_problem_n_flooded(p) }, 1);

    let mut h = [0u32; 1];
    let mut v = 0.0;
    assert_eq!(unsafe { nsp_problem_solve(p, 3.5, h.as_mut_ptr(), 1, &mut v) }, NspStatus::Ok);
    assert_eq!(h, [2]);
    assert!((v - 1.25).abs() < 1e-12);

    let mut saa = 0.0;
    assert_eq!(unsafe { nsp_problem_saa(p, h.as_ptr(), 1, &mut saa) }, NspStatus::Ok);
    assert_eq!(saa, v);

    let synth = [3u32, 0, 1, 2];
    let mut summary = NspSummary::default();
    assert_eq!(
        unsafe { nsp_problem_evaluate(p, h.as_ptr(), 1, synth.as_ptr(), 4, &mut summary) },
        NspStatus::Ok
    );
    assert!((summary.mean - 1.25).abs() < 1e-12);
    assert_eq!(summary.max, 5.0);
    assert_eq!(summary.v_oos, summary.mean);

    let wrong = [1u32, 1];
    assert_eq!(unsafe { nsp_problem_saa(p, wrong.as_ptr(), 2, &mut saa) }, NspStatus::InvalidInput);
    unsafe { nsp_problem_free(p) };

    let missing = CString::new("/nonexistent/grid.json").unwrap();
    let mut q = ptr::null_mut();
    assert_eq!(unsafe { nsp_problem_load(missing.as_ptr(), sp.as_ptr(), &mut q) }, NspStatus::InvalidInput);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(nsp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// The generated header compiles as C11 when a C compiler is available.
#[test]
fn header_compiles_as_c() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/nortasp.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["nsp_model_fit", "nsp_model_sample", "nsp_problem_solve", "nsp_last_error"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"nortasp.h\"\nint main(void) { NspSummary s; (void)s; return NSP_STATUS_OK; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(_) => eprintln!("no C compiler found; skipped compile check"),
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "nortasp.h"

int main(void) {
    const uint32_t rows[] = {0, 1, 1, 2, 2, 2, 3, 3, 0, 0};
    NspModel *model = NULL;
    if (nsp_model_fit(rows, 5, 2, &model) != NSP_STATUS_OK) {
        fprintf(stderr, "%s\n", nsp_last_error());
        return 1;
    }
    uint32_t out[40];
    if (nsp_model_sample(model, 20, 3, out, 40) != NSP_STATUS_OK) return 2;
    for (int i = 0; i < 40; i++) if (out[i] > 3) return 3;
    if (nsp_model_sample(model, 21, 3, out, 40) != NSP_STATUS_BUFFER_TOO_SMALL) return 4;
    nsp_model_free(model);
    printf("ok %s\n", nsp_version());
    return 0;
}
"#;

/// Links a C program against the static library when both exist.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let Some(lib) = exe.parent().and_then(|d| d.parent()).map(|d| d.join("libnortasp_ffi.a")) else {
        return;
    };
    if !lib.exists() {
        eprintln!("static library not built; skipped link check");
        return;
    }
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let built = Command::new("cc")
        .arg("-std=c11")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status();
    match built {
        Ok(s) if s.success() => {}
        Ok(_) => panic!("C program failed to build"),
        Err(_) => {
            eprintln!("no C compiler found; skipped link check");
            return;
        }
    }
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
