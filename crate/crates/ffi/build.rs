use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").expect("set by cargo"));
    let header = crate_dir.join("include").join("gradvi.h");
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("GRADVI_H".into()),
        cpp_compat: true,
        documentation: true,
        usize_is_size_t: true,
        header: Some(
            "/* C interface to the gradvi variational regression library. */".into(),
        ),
        ..cbindgen::Config::default()
    };
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("header generation failed")
        .write_to_file(header);
    println!("cargo:rerun-if-changed=src/lib.rs");
}
