//! Byte-for-byte comparison of emitted Verilog with checked-in files.
//! Set `UPDATE_GOLDEN=1` to rewrite them.

use std::path::PathBuf;

use fesic::designs::Design;
use fesic::fesic;
use fesic::verilog::{emit_verilog, lint};

fn check(design: Design, module: &str) {
    let p = design.build().unwrap();
    let text = emit_verilog(p.env(), &fesic(&p), module).unwrap();
    lint(&text).unwrap();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{module}.v"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(golden == text, "{module}: emitted Verilog differs from {}", path.display());
}

#[test]
fn counter_matches_golden() {
    check(Design::Counter { n: 4 }, "counter");
}

#[test]
fn sorter_matches_golden() {
    check(Design::Sorter { n: 2, width: 4 }, "sorter");
}
