//! Compile a small C client against the generated header and link it with
//! the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const CLIENT: &str = r#"
#include <stdio.h>
#include <string.h>
#include "ssp_po.h"

int main(void) {
    SspPoInstance *inst = NULL;
    if (ssp_instance_random(3, 2, 0.2, 0.0, 1, &inst) != SSP_STATUS_OK) return 10;
    SspKeyParams kp;
    if (ssp_instance_key_params(inst, &kp) != SSP_STATUS_OK) return 11;
    if (kp.b_star < 1.0) return 12;
    double v[3];
    size_t n = 0;
    if (ssp_instance_optimal_values(inst, v, 3, &n) != SSP_STATUS_OK || n != 3) return 13;
    ssp_instance_free(inst);
    if (ssp_instance_from_json("not json", &inst) != SSP_STATUS_PARSE) return 14;
    if (strlen(ssp_last_error()) == 0) return 15;
    printf("%.6f %zu\n", kp.b_star, n);
    return 0;
}
"#;

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

fn compiler() -> String {
    std::env::var("CC").unwrap_or_else(|_| "cc".into())
}

#[test]
fn header_is_generated_and_parses_as_c() {
    let header = header_dir().join("ssp_po.h");
    let text = std::fs::read_to_string(&header).expect("header exists after build");
    for name in ["ssp_instance_random", "ssp_experiment_run", "SSP_STATUS_OK", "typedef struct SspPoInstance SspPoInstance"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("h.c");
    std::fs::write(&src, "#include \"ssp_po.h\"\nint main(void) { return 0; }\n").unwrap();
    let status = Command::new(compiler())
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header_dir())
        .arg(&src)
        .status()
        .expect("C compiler available");
    assert!(status.success());
}

#[test]
fn c_client_links_against_the_static_library() {
    // tests run from <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libssp_po_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    let bin = dir.path().join("client");
    std::fs::write(&src, CLIENT).unwrap();
    let status = Command::new(compiler())
        .args(["-std=c99", "-Wall", "-I"])
        .arg(header_dir())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "client exited with {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.trim().ends_with(" 3"), "{text}");
}
