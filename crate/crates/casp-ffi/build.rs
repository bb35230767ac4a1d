fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("CARGO_MANIFEST_DIR set");
    std::fs::create_dir_all(format!("{crate_dir}/include")).expect("create include dir");
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(format!("{crate_dir}/include/casp.h"));
        }
        // A stale committed header is better than a broken build when the
        // generator itself fails (e.g. during publish verification).
        Err(e) => println!("cargo:warning=cbindgen failed, keeping committed header: {e}"),
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
