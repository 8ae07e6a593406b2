//! Compiles a small C program against the generated header and the static
//! library. Skipped when no C compiler is on PATH.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "factscore.h"

int main(void) {
    double f1 = 0.0;
    if (fs_token_f1("a b", "a c", &f1) != FS_OK || f1 != 0.5) return 1;
    int supported = -1, no_answer = -1;
    if (fs_parse_verdict("The answer is False", &supported, &no_answer) != FS_OK) return 2;
    if (supported != 0 || no_answer != 0) return 3;
    FsKbStore *store = NULL;
    if (fs_kb_open("/nonexistent", &store) != FS_ERR_IO || store != NULL) return 4;
    char msg[128];
    size_t n = fs_last_error_message(msg, sizeof msg);
    if (n == 0 || strlen(msg) == 0) return 5;
    char *json = NULL;
    if (fs_split_sentences_json("One. Two.", &json) != FS_OK) return 6;
    if (strstr(json, "Two.") == NULL) return 7;
    fs_string_free(json);
    printf("%s\n", fs_version());
    return 0;
}
"#;

fn compiler() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
}

#[test]
fn header_compiles_and_links() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libfactscore_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
