//! Compiles and runs a small C program against `include/phcirc.h` and the
//! built dynamic library, exercising the ABI end to end. Skips when no C
//! compiler is on PATH.

use std::path::PathBuf;
use std::process::Command;

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "phcirc.h"

static const char *NETLIST =
    "edge V V 1 2 1\n"
    "edge C1 C 2 3 1\n"
    "edge R1 R 3 1 2\n";

int main(void) {
    PhcCircuit *c = 0;
    char *json = 0;
    char *csv = 0;
    if (phc_circuit_parse(NETLIST, &c) != PHC_OK) {
        fprintf(stderr, "parse: %s\n", phc_last_error());
        return 1;
    }
    if (phc_analyze_json(c, 2, 0, &json) != PHC_OK) {
        fprintf(stderr, "analyze: %s\n", phc_last_error());
        return 2;
    }
    if (!strstr(json, "\"amenable\": true")) {
        fprintf(stderr, "unexpected report: %s\n", json);
        return 3;
    }
    phc_string_free(json);
    if (phc_simulate_csv(c, 0.0, 1.0, 0.125, 0.0, 0.0, 2, 2, 0.0, &csv) != PHC_OK) {
        fprintf(stderr, "simulate: %s\n", phc_last_error());
        return 4;
    }
    if (strncmp(csv, "t,", 2) != 0) {
        fprintf(stderr, "unexpected csv: %.40s\n", csv);
        return 5;
    }
    phc_string_free(csv);

    /* parallel voltage sources must be rejected as an input failure */
    PhcCircuit *bad = 0;
    /* parse succeeds (syntax is fine) ... */
    if (phc_circuit_parse("edge V1 V 1 2 1\nedge V2 V 1 2 1\n", &bad) != PHC_OK) {
        return 6;
    }
    /* ... and the analysis flags the voltage cycle */
    if (phc_analyze_json(bad, 2, 0, &json) != PHC_INPUT) {
        fprintf(stderr, "expected PHC_INPUT, got: %s\n", phc_last_error());
        return 7;
    }
    phc_circuit_free(bad);
    phc_circuit_free(c);
    puts("c-smoke ok");
    return 0;
}
"#;

fn cdylib_dir() -> Option<PathBuf> {
    // test binary lives in target/<profile>/deps; `cargo build` also drops
    // a copy of the cdylib one level up
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap().to_path_buf();
    let profile = deps.parent().unwrap().to_path_buf();
    [deps, profile]
        .into_iter()
        .find(|d| d.join("libphcirc_capi.so").exists())
}

#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping ABI smoke test");
        return;
    };
    let Some(profile) = cdylib_dir() else {
        panic!("libphcirc_capi.so not found next to the test binary");
    };
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempdir();
    let src = dir.join("smoke.c");
    let bin = dir.join("smoke");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let out = Command::new(&cc)
        .arg(&src)
        .arg("-o")
        .arg(&bin)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&profile)
        .arg("-lphcirc_capi")
        .arg(format!("-Wl,-rpath,{}", profile.display()))
        .arg("-Wall")
        .arg("-Werror")
        .output()
        .expect("compiler invocation");
    assert!(
        out.status.success(),
        "cc failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&bin).output().expect("run smoke binary");
    assert!(
        run.status.success(),
        "smoke binary failed ({:?}):\n{}",
        run.status.code(),
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "c-smoke ok");
    let _ = std::fs::remove_dir_all(&dir);
}

fn which_cc() -> Result<String, ()> {
    for cand in ["cc", "gcc", "clang"] {
        if Command::new(cand)
            .arg("--version")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
        {
            return Ok(cand.to_string());
        }
    }
    Err(())
}

fn tempdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("phcirc-capi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
