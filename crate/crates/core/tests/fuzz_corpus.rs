//! Replays the checked-in fuzz seeds through the same checks the fuzz
//! targets make, plus a few hostile inputs.

use std::path::PathBuf;

use inicon::config::RunConfig;
use inicon::expr::Expr;
use inicon::forward::BoundaryRecord;
use inicon::scenario::Nonlinearity;
use inicon::sparsela::CsrMatrix;

fn seeds(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<String> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| std::fs::read_to_string(e.unwrap().path()).unwrap())
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn config_seeds_round_trip() {
    for s in seeds("config_json") {
        let cfg = RunConfig::from_json(&s).unwrap_or_else(|e| panic!("{s}: {e}"));
        let again = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }
}

#[test]
fn triplet_seeds_round_trip() {
    for s in seeds("triplets") {
        let a = CsrMatrix::from_triplet_text(&s).unwrap_or_else(|e| panic!("{s}: {e}"));
        assert_eq!(CsrMatrix::from_triplet_text(&a.to_triplet_text()).unwrap(), a);
    }
}

#[test]
fn boundary_seeds_round_trip() {
    for s in seeds("boundary_csv") {
        let rec = BoundaryRecord::from_csv(&s).unwrap_or_else(|e| panic!("{s}: {e}"));
        let back = BoundaryRecord::from_csv(&rec.to_csv()).unwrap();
        assert_eq!(back.nodes, rec.nodes);
        assert_eq!(back.f, rec.f);
    }
}

#[test]
fn expression_seeds_parse() {
    for s in seeds("q_expr") {
        let q = Nonlinearity::parse(&s).unwrap_or_else(|e| panic!("{s}: {e}"));
        assert!(q.eval(0.5).is_finite());
    }
}

#[test]
fn hostile_inputs_are_rejected_without_panicking() {
    assert!(CsrMatrix::from_triplet_text("# 18446744073709551615 1 0\n").is_err());
    assert!(CsrMatrix::from_triplet_text("# 4294967296 4294967296 0\n").is_err());
    assert!(CsrMatrix::from_triplet_text("1 1 1e308\n1 1 1e308\n").is_err());
    assert!(CsrMatrix::from_triplet_text("1 1 nan\n").is_err());
    assert!(Expr::parse(&"(".repeat(10_000)).is_err());
    assert!(Expr::parse(&format!("{}s", "-".repeat(4000))).is_err());
    assert!(BoundaryRecord::from_csv("edge,i,j,t,f,g\nleft,0,1,0,0,0\n").is_err());
    assert!(BoundaryRecord::from_csv("edge,i,j,t,f,g\nleft,1,1,1,0,0\nleft,1,1,0,0,0\n").is_err());
    assert!(RunConfig::from_json("{\"grid\":{\"nx\":1}}").is_err());
    assert!(RunConfig::from_json(&"[".repeat(10_000)).is_err());
}
