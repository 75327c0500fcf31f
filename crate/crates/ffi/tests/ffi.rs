use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use jointseg::corpus::parse_corpus;
use jointseg::{archive, Model, TrainConfig};
use jointseg_ffi::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_model(corpus: &str, seed: u64) -> Model {
    let train = parse_corpus(corpus, Path::new("train")).unwrap();
    let cfg = TrainConfig {
        hidden_size: 6,
        char_dim: 5,
        radical_dim: 3,
        ..TrainConfig::default()
    };
    Model::build(&train, &cfg, None, None, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(jseg_last_error()) }.to_string_lossy().into_owned()
}

fn load(paths: &[&Path]) -> (JsegStatus, *mut JsegTagger) {
    let owned: Vec<CString> = paths
        .iter()
        .map(|p| CString::new(p.to_str().unwrap()).unwrap())
        .collect();
    let ptrs: Vec<*const c_char> = owned.iter().map(|c| c.as_ptr()).collect();
    let mut t = ptr::null_mut();
    let status = unsafe { jseg_tagger_load(ptrs.as_ptr(), ptrs.len(), &mut t) };
    (status, t)
}

#[test]
fn tag_through_the_c_interface() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model("夏天_NT 太_AD 热_VA\n", 1);
    let path = dir.path().join("m.bin");
    archive::save(&model, &path).unwrap();

    let (status, t) = load(&[&path, &path]);
    assert_eq!(status, JsegStatus::Ok);
    assert!(!t.is_null());

    let mut k = 0usize;
    assert_eq!(unsafe { jseg_tagger_num_labels(t, &mut k) }, JsegStatus::Ok);
    assert_eq!(k, model.labels.k());

    let input = CString::new("夏天 太热").unwrap();
    let mut out: *mut c_char = ptr::null_mut();
    assert_eq!(unsafe { jseg_tag(t, input.as_ptr(), &mut out) }, JsegStatus::Ok);
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { jseg_string_free(out) };
    let expected = model.tag(&"夏天太热".chars().collect::<Vec<_>>()).unwrap();
    assert_eq!(text, jointseg::corpus::format_sentence(&expected));

    let empty = CString::new("").unwrap();
    assert_eq!(unsafe { jseg_tag(t, empty.as_ptr(), &mut out) }, JsegStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(out) }.to_bytes(), b"");
    unsafe { jseg_string_free(out) };

    unsafe { jseg_tagger_free(t) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin");
    let (status, t) = load(&[&missing]);
    assert_eq!(status, JsegStatus::Io);
    assert!(t.is_null());
    assert!(last_error().contains("nope.bin"));

    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a model\n").unwrap();
    assert_eq!(load(&[&junk]).0, JsegStatus::Archive);

    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    archive::save(&small_model("夏天_NT 太_AD 热_VA\n", 1), &a).unwrap();
    archive::save(&small_model("我_PN 们_PN\n", 2), &b).unwrap();
    assert_eq!(load(&[&a, &b]).0, JsegStatus::LabelSpaceMismatch);

    assert_eq!(unsafe { jseg_tagger_load(ptr::null(), 1, ptr::null_mut()) }, JsegStatus::NullPointer);
    let mut out = ptr::null_mut();
    let s = CString::new("x").unwrap();
    assert_eq!(unsafe { jseg_tag(ptr::null(), s.as_ptr(), &mut out) }, JsegStatus::NullPointer);

    let bad = [0xffu8, 0x00];
    let (_, t) = load(&[&a]);
    assert_eq!(unsafe { jseg_tag(t, bad.as_ptr().cast(), &mut out) }, JsegStatus::InvalidUtf8);
    unsafe { jseg_tagger_free(t) };
    unsafe { jseg_tagger_free(ptr::null_mut()) };
    unsafe { jseg_string_free(ptr::null_mut()) };
}

#[test]
fn metrics() {
    let mut p = 0.0;
    assert_eq!(unsafe { jseg_mcnemar_midp(0, 5, &mut p) }, JsegStatus::Ok);
    assert_eq!(p, 0.03125);
    assert_eq!(unsafe { jseg_mcnemar_midp(0, 0, &mut p) }, JsegStatus::InvalidArgument);
    assert_eq!(last_error(), "no discordant pairs");

    let gold = CString::new("ab_N c_V\n").unwrap();
    let pred = CString::new("a_N b_N c_V\n").unwrap();
    let (mut pp, mut r, mut f) = (0.0, 0.0, 0.0);
    assert_eq!(
        unsafe { jseg_word_f1(gold.as_ptr(), pred.as_ptr(), 0, &mut pp, &mut r, &mut f) },
        JsegStatus::Ok
    );
    assert_eq!((pp, r), (1.0 / 3.0, 0.5));
    assert!((f - 0.4).abs() < 1e-15);

    let other = CString::new("xy_N\n").unwrap();
    assert_eq!(
        unsafe { jseg_word_f1(gold.as_ptr(), other.as_ptr(), 1, &mut pp, &mut r, &mut f) },
        JsegStatus::InvalidArgument
    );
    assert!(last_error().starts_with("sentence 1"));

    let v = unsafe { CStr::from_ptr(jseg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/jointseg.h");
    assert!(header.exists());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"jointseg.h\"\nint main(void) { JsegTagger *t = 0; return jseg_tagger_load(0, 0, &t) == JSEG_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
