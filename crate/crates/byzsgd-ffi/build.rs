fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let config = cbindgen::Config::from_root_or_default(&crate_dir);
    match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(format!("{crate_dir}/include/byzsgd.h"));
        }
        // Syntax errors in src/lib.rs surface as rustc diagnostics anyway;
        // do not also fail the build script, it would mask them.
        Err(err) => println!("cargo:warning=header generation skipped: {err}"),
    }
}
