//! Regenerates `include/mobaid.h` from the public items in `src/lib.rs`.
//!
//! The header is committed, so consumers can compile against it without
//! running this crate's build; generation failures only warn.

use std::env;
use std::path::Path;

fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let crate_dir = env::var("CARGO_MANIFEST_DIR").expect("cargo sets CARGO_MANIFEST_DIR");
    let header = Path::new(&crate_dir).join("include").join("mobaid.h");
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(header);
        }
        Err(e) => println!("cargo:warning=skipping header generation: {e}"),
    }
}
