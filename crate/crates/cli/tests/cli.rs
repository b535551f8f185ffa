use std::path::Path;
use std::process::{Command, Output};

use hexdtn::config::DESK_CONFIG;

fn coarse(source: bool) -> String {
    let mut c = DESK_CONFIG.replace("h = 0.125", "h = 0.25");
    if !source {
        c = c.replace("amplitude = [1.0, 0.0]", "amplitude = [0.0, 0.0]");
    }
    c
}

fn hexdtn(args: &[&str], config: &Path, extra: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hexdtn"));
    cmd.args(args).arg("--config").arg(config).env("RUST_LOG", "info");
    for (flag, p) in ["--out", "--cache"].iter().zip(extra) {
        cmd.arg(flag).arg(p);
    }
    cmd.output().unwrap()
}

#[test]
fn cached_and_uncached_solves_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, coarse(true)).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cache = dir.path().join("ops.bin");

    let pre = hexdtn(&["precompute"], &cfg, &[&a, &cache]);
    assert!(pre.status.success(), "{}", String::from_utf8_lossy(&pre.stderr));
    let hit = hexdtn(&["solve"], &cfg, &[&a, &cache]);
    assert!(hit.status.success());
    assert!(String::from_utf8_lossy(&hit.stderr).contains("operator cache hit"));

    let fresh = hexdtn(&["solve"], &cfg, &[&b]);
    assert!(fresh.status.success());
    assert!(!String::from_utf8_lossy(&fresh.stderr).contains("operator cache hit"));
    for f in ["lambda.txt", "lambda0.txt", "fields.csv", "diagnostics.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(std::fs::read(&cache).unwrap(), std::fs::read(b.join("operators.bin")).unwrap());
}

#[test]
fn zero_source_exports_zero_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, coarse(false)).unwrap();
    let out = dir.path().join("o");
    let r = hexdtn(&["export", "--format", "both"], &cfg, &[&out]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("fields.csv")).unwrap();
    let nodes = 3 * 4 * 5 + 1;
    let cells = 1 + 3 * 5 * 9;
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), nodes * cells);
    for r in rows {
        let c: Vec<&str> = r.split(',').collect();
        assert_eq!(c[7].parse::<f64>().unwrap(), 0.0);
        assert_eq!(c[8].parse::<f64>().unwrap(), 0.0);
    }
    assert!(out.join("fields.vtk").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(hexdtn(&["solve"], &missing, &[]).status.code(), Some(4));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, coarse(true).replace("rho_b = 1.0", "rho_b = 3.0")).unwrap();
    let r = hexdtn(&["solve"], &bad, &[dir.path()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("rho_b"));

    let garbled = dir.path().join("garbled.toml");
    std::fs::write(&garbled, "[lattice\nd = 1").unwrap();
    assert_eq!(hexdtn(&["solve"], &garbled, &[]).status.code(), Some(2));

    let usage = Command::new(env!("CARGO_BIN_EXE_hexdtn")).arg("frobnicate").output().unwrap();
    assert_eq!(usage.status.code(), Some(2));

    // output directory blocked by a regular file
    let good = dir.path().join("good.toml");
    std::fs::write(&good, coarse(true)).unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    assert_eq!(hexdtn(&["solve"], &good, &[&blocker.join("out")]).status.code(), Some(4));
}
