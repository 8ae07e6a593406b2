use factscore::corpus::ingest_dump;
use factscore_ffi::*;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    fs_string_free(p);
    s
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { fs_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned();
    assert_eq!(n, s.len());
    s
}

fn sample_store(dir: &std::path::Path) -> std::path::PathBuf {
    let dump = dir.join("dump.jsonl");
    std::fs::write(
        &dump,
        concat!(
            r#"{"title":"Ada Lovelace","text":"Ada Lovelace was an English mathematician. She wrote about the Analytical Engine."}"#,
            "\n",
            r#"{"title":"Alan Turing","text":"Alan Turing was a British computer scientist. He proposed the Turing test."}"#,
            "\n"
        ),
    )
    .unwrap();
    let store = dir.join("kb.fekb");
    ingest_dump(&dump, &store, 256).unwrap();
    store
}

#[test]
fn store_and_index_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(sample_store(dir.path()).to_str().unwrap());
    unsafe {
        let mut store = ptr::null_mut();
        assert_eq!(fs_kb_open(path.as_ptr(), &mut store), FS_OK);
        let mut n = 0usize;
        assert_eq!(fs_kb_document_count(store, &mut n), FS_OK);
        assert_eq!(n, 2);

        let mut json = ptr::null_mut();
        assert_eq!(fs_kb_passages_json(store, c("Alan Turing").as_ptr(), &mut json), FS_OK);
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(v[0]["doc_title"], "Alan Turing");

        let mut index = ptr::null_mut();
        assert_eq!(fs_index_build(store, &mut index), FS_OK);
        fs_kb_free(store);
        let mut json = ptr::null_mut();
        assert_eq!(
            fs_index_retrieve_json(index, c("Ada Lovelace").as_ptr(), c("mathematician").as_ptr(), 1, &mut json),
            FS_OK
        );
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 1);
        assert_eq!(v[0]["doc_title"], "Ada Lovelace");
        fs_index_free(index);
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let mut store = ptr::null_mut();
        assert_eq!(fs_kb_open(ptr::null(), &mut store), FS_ERR_NULL);
        assert!(last_error().contains("path"));
        assert_eq!(fs_kb_open(c("/nonexistent/kb.fekb").as_ptr(), &mut store), FS_ERR_IO);
        assert!(store.is_null());

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.fekb");
        std::fs::write(&bad, b"not a store").unwrap();
        assert_eq!(fs_kb_open(c(bad.to_str().unwrap()).as_ptr(), &mut store), FS_ERR_INTEGRITY);

        let invalid = [0xffu8, 0];
        let mut s = 0;
        let mut na = 0;
        assert_eq!(fs_parse_verdict(invalid.as_ptr().cast(), &mut s, &mut na), FS_ERR_UTF8);

        let mut out = 0.0;
        assert_eq!(fs_factscore(ptr::null(), 0, &mut out), FS_ERR_UNDEFINED);
        assert_eq!(fs_cumulative_error_rate(ptr::null(), 0, &mut out), FS_ERR_UNDEFINED);
        let flat = [1.0, 1.0, 1.0];
        let y = [1.0, 2.0, 3.0];
        assert_eq!(fs_pearson(flat.as_ptr(), y.as_ptr(), 3, &mut out), FS_ERR_UNDEFINED);

        let mut json = ptr::null_mut();
        assert_eq!(
            fs_build_afg_prompt_json(c("x").as_ptr(), c("{not json").as_ptr(), &mut json),
            FS_ERR_INVALID
        );
        assert!(json.is_null());

        assert_eq!(fs_token_f1(c("a").as_ptr(), c("a").as_ptr(), &mut out), FS_OK);
        assert_eq!(last_error(), "");
        assert_eq!(fs_last_error_message(ptr::null_mut(), 0), 0);
        fs_string_free(ptr::null_mut());
        fs_kb_free(ptr::null_mut());
        fs_index_free(ptr::null_mut());
    }
}

#[test]
fn text_helpers() {
    unsafe {
        let (mut s, mut na) = (0, 0);
        assert_eq!(fs_parse_verdict(c("True.").as_ptr(), &mut s, &mut na), FS_OK);
        assert_eq!((s, na), (1, 0));
        assert_eq!(fs_parse_verdict(c("maybe").as_ptr(), &mut s, &mut na), FS_OK);
        assert_eq!((s, na), (0, 1));

        let mut json = ptr::null_mut();
        assert_eq!(fs_split_sentences_json(c("He left. She stayed.").as_ptr(), &mut json), FS_OK);
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(v[1]["text"], "She stayed.");

        assert_eq!(fs_parse_atomic_facts_json(c("- A.\n- B.\n- A.").as_ptr(), 2, &mut json), FS_OK);
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(v["facts"].as_array().unwrap().len(), 2);
        assert_eq!(v["facts"][1]["sentence_index"], 2);

        let demo = c(r#"{"sentence":"He was born in 1900.","facts":["He was born.","He was born in 1900."]}"#);
        assert_eq!(fs_build_afg_prompt_json(c("She sings.").as_ptr(), demo.as_ptr(), &mut json), FS_OK);
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 2);
        assert!(v[1]["content"].as_str().unwrap().ends_with("She sings."));

        let passages = c(r#"[{"doc_title":"Ada","text":"Ada was a mathematician."}]"#);
        assert_eq!(
            fs_build_afv_prompt_json(c("Ada").as_ptr(), c("Ada was a mathematician.").as_ptr(), passages.as_ptr(), &mut json),
            FS_OK
        );
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        let user = v[1]["content"].as_str().unwrap();
        assert!(user.contains("[Title: Ada]"));
        assert!(user.ends_with("Answer:"));
    }
}

#[test]
fn numeric_helpers() {
    unsafe {
        let mut out = 0.0;
        let labels = [1u8, 0, 1, 1];
        assert_eq!(fs_factscore(labels.as_ptr(), 4, &mut out), FS_OK);
        assert_eq!(out, 0.75);
        assert!((fs_error_rate(42.5, 45.3) + 2.8).abs() < 1e-12);
        let ers = [-2.8, 1.6, 9.0];
        assert_eq!(fs_cumulative_error_rate(ers.as_ptr(), 3, &mut out), FS_OK);
        assert!((out - 13.4).abs() < 1e-12);
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [10.0, 20.0, 40.0, 80.0];
        assert_eq!(fs_spearman(x.as_ptr(), y.as_ptr(), 4, &mut out), FS_OK);
        assert!((out - 1.0).abs() < 1e-12);
        assert_eq!(fs_pearson(x.as_ptr(), x.as_ptr(), 4, &mut out), FS_OK);
        assert!((out - 1.0).abs() < 1e-12);
        assert_eq!(fs_token_f1(c("a b").as_ptr(), c("a c").as_ptr(), &mut out), FS_OK);
        assert!((out - 0.5).abs() < 1e-12);
        let v = CStr::from_ptr(fs_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
