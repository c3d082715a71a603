//! Compiles a small C program against the generated header and the static
//! library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <math.h>
#include "gorf.h"

int main(void) {
    GorfKernel *k = NULL;
    if (gorf_kernel_new("gaussian:sigma=2", 5, &k) != GORF_STATUS_OK) return 10;
    GorfModel *m = NULL;
    if (gorf_model_build(k, GORF_METHOD_GORF, GORF_COUPLING_STACKED, 2000, 3, &m) != GORF_STATUS_OK) return 11;
    double x[5] = {0.1, 0.2, 0.3, 0.4, 0.5}, y[5] = {0.5, 0.4, 0.3, 0.2, 0.1};
    double exact = 0, approx = 0;
    gorf_kernel_eval(k, x, y, 5, &exact);
    gorf_model_approx_kernel(m, x, y, 5, &approx);
    if (fabs(exact - approx) > 0.05) return 12;
    if (gorf_kernel_new("poly:a=0.5,m=1", 5, &k) == GORF_STATUS_OK) return 13;
    if (gorf_last_error_message() == NULL) return 14;
    gorf_model_free(m);
    printf("%.6f %.6f\n", exact, approx);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    // CARGO_TARGET_TMPDIR is target/tmp.
    let profile_dir = tmp.parent().unwrap().join(if cfg!(debug_assertions) { "debug" } else { "release" });
    let lib = profile_dir.join("libgorf_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let src = tmp.join("gorf_smoke.c");
    let exe = tmp.join("gorf_smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler not available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(!out.stdout.is_empty());
}
