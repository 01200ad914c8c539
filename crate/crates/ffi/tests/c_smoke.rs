//! Compiles and runs a small C program against the generated header and the
//! cdylib, proving the ABI is consumable from C.

use std::path::PathBuf;
use std::process::Command;

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "madi.h"

int main(void) {
    MadiPopulation *pop = NULL;
    if (madi_population_synthetic(7, 300, 6, &pop) != MADI_STATUS_OK) return 1;
    if (madi_population_size(pop) != 300) return 2;

    MadiPartition *part = NULL;
    if (madi_partition_generate(pop, "sim1", 0.7, 2, &part) != MADI_STATUS_OK) return 3;
    if (madi_partition_register_size(part) != 210) return 4;

    MadiEstimate est;
    if (madi_estimate_total(pop, part, "srs_b_madi_ols", 20, 3, 0.95, &est) != MADI_STATUS_OK)
        return 5;
    if (!(est.point > 0.0) || !est.has_variance || !est.has_interval) return 6;
    if (!(est.ci_low <= est.point && est.point <= est.ci_high)) return 7;

    size_t n = 0;
    if (madi_required_sample_size(pop, NULL, "srs_u_ht", 0.05, NULL, 1, &n) != MADI_STATUS_OK)
        return 8;
    if (n < 2) return 9;

    /* error path: message must be retrievable */
    MadiPopulation *missing = NULL;
    if (madi_population_load_csv("/no/such/file.csv", &missing) != MADI_STATUS_IO) return 10;
    if (madi_last_error_message()[0] == '\0') return 11;

    madi_partition_free(part);
    madi_population_free(pop);
    printf("c smoke ok\n");
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // test binary lives in target/<profile>/deps
    let exe = std::env::current_exe().expect("test binary path");
    exe.parent()
        .and_then(|p| p.parent())
        .expect("target profile dir")
        .to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    // the cdylib sits next to the test binary (deps/) during `cargo test`,
    // or one level up after a plain `cargo build`
    let base = target_dir();
    let profile_dir = [base.join("deps"), base]
        .into_iter()
        .find(|dir| dir.join("libmadi_ffi.so").exists())
        .expect("cdylib not found next to the test binary");

    let include_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(
        include_dir.join("madi.h").exists(),
        "generated header missing"
    );

    let work = tempfile::tempdir().expect("temp dir");
    let c_path = work.path().join("smoke.c");
    std::fs::write(&c_path, C_PROGRAM).expect("write C source");
    let exe_path = work.path().join("smoke");

    let compile = Command::new("cc")
        .arg(&c_path)
        .arg("-I")
        .arg(&include_dir)
        .arg("-L")
        .arg(&profile_dir)
        .arg("-lmadi_ffi")
        .arg(format!("-Wl,-rpath,{}", profile_dir.display()))
        .arg("-o")
        .arg(&exe_path)
        .output()
        .expect("invoke cc");
    assert!(
        compile.status.success(),
        "cc failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&exe_path).output().expect("run smoke binary");
    assert!(
        run.status.success(),
        "smoke binary exited {:?}:\n{}",
        run.status.code(),
        String::from_utf8_lossy(&run.stdout)
    );
    assert!(String::from_utf8_lossy(&run.stdout).contains("c smoke ok"));
}
