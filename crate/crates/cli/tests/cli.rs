use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ecn_core::distance::pairwise_sq_euclidean;
use ecn_core::io;

fn ecn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to start ecn")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ecn(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    ok(dir, &["synth", "--seed", &seed.to_string(), "--out-prefix", "s"]);
    (dir.join("s.ecnf"), dir.join("s.meta.csv"))
}

fn map_of(dir: &Path, distances: &str, report: &str) -> f64 {
    ok(
        dir,
        &[
            "eval",
            "--distances",
            distances,
            "--meta",
            "s.meta.csv",
            "--out",
            report,
        ],
    );
    let text = std::fs::read_to_string(dir.join(report)).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json["map"].as_f64().unwrap()
}

#[test]
fn method_none_passes_distances_through() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (features, meta) = synth(d, 1);
    ok(d, &["distance", "--features", "s.ecnf", "--out", "all.ecnd"]);
    ok(
        d,
        &[
            "rerank",
            "--distances",
            "all.ecnd",
            "--meta",
            "s.meta.csv",
            "--method",
            "none",
            "--out",
            "qg.ecnd",
        ],
    );

    let all = io::read_distance(d.join("all.ecnd")).unwrap();
    let qg = io::read_distance(d.join("qg.ecnd")).unwrap();
    let records = io::read_metadata(&meta).unwrap();
    let (queries, gallery) = (records.queries(), records.gallery());
    assert_eq!((qg.rows(), qg.cols()), (queries.len(), gallery.len()));
    for (r, &p) in queries.iter().enumerate() {
        for (c, &g) in gallery.iter().enumerate() {
            assert_eq!(qg.get(r, c), all.get(p, g));
        }
    }

    // the features route slices the same matrix
    ok(
        d,
        &[
            "rerank",
            "--features",
            "s.ecnf",
            "--meta",
            "s.meta.csv",
            "--method",
            "none",
            "--out",
            "qg2.ecnd",
        ],
    );
    assert_eq!(
        std::fs::read(d.join("qg.ecnd")).unwrap(),
        std::fs::read(d.join("qg2.ecnd")).unwrap()
    );
    let direct = pairwise_sq_euclidean(&io::read_features(features).unwrap()).unwrap();
    assert_eq!(all.get(0, 1), f64::from(direct.get(0, 1) as f32));
}

#[test]
fn ecn_rank_beats_baseline_on_synthetic_sets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (mut base, mut ecn_rank) = (0.0, 0.0);
    for seed in 0..20 {
        synth(d, seed);
        ok(
            d,
            &[
                "rerank",
                "--features",
                "s.ecnf",
                "--meta",
                "s.meta.csv",
                "--method",
                "none",
                "--out",
                "b.ecnd",
            ],
        );
        ok(
            d,
            &[
                "rerank",
                "--features",
                "s.ecnf",
                "--meta",
                "s.meta.csv",
                "--method",
                "ecn-rank",
                "--out",
                "e.ecnd",
            ],
        );
        base += map_of(d, "b.ecnd", "b.json");
        ecn_rank += map_of(d, "e.ecnd", "e.json");
    }
    assert!(ecn_rank > base, "ecn-rank {} vs none {}", ecn_rank / 20.0, base / 20.0);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, 4);
    let synth_bytes = std::fs::read(d.join("s.ecnf")).unwrap();
    synth(d, 4);
    assert_eq!(synth_bytes, std::fs::read(d.join("s.ecnf")).unwrap());

    for method in ["rank-dist", "ecn-orig", "ecn-rank"] {
        let mut outputs = Vec::new();
        for threads in ["1", "3"] {
            ok(
                d,
                &[
                    "--threads",
                    threads,
                    "rerank",
                    "--features",
                    "s.ecnf",
                    "--meta",
                    "s.meta.csv",
                    "--method",
                    method,
                    "--out",
                    "r.ecnd",
                ],
            );
            ok(
                d,
                &[
                    "eval",
                    "--distances",
                    "r.ecnd",
                    "--meta",
                    "s.meta.csv",
                    "--out",
                    "r.json",
                ],
            );
            outputs.push((
                std::fs::read(d.join("r.ecnd")).unwrap(),
                std::fs::read(d.join("r.json")).unwrap(),
            ));
        }
        assert!(outputs[0] == outputs[1], "{method} differs between thread counts");
    }
}

#[test]
fn errors_map_to_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, 2);
    std::fs::write(d.join("junk.ecnf"), b"NOPE\x01\x00").unwrap();
    std::fs::write(d.join("bad.meta.csv"), "index,person_id,camera_id,role\n0,1,0,probe\n").unwrap();

    let cases: [(&[&str], i32); 5] = [
        (&["eval", "--distances", "missing.ecnd", "--meta", "s.meta.csv"], 3),
        (&["distance", "--features", "junk.ecnf", "--out", "x.ecnd"], 4),
        (
            &[
                "rerank",
                "--features",
                "s.ecnf",
                "--meta",
                "bad.meta.csv",
                "--out",
                "x.ecnd",
            ],
            9,
        ),
        (
            &[
                "rerank",
                "--features",
                "s.ecnf",
                "--meta",
                "s.meta.csv",
                "--t",
                "0",
                "--out",
                "x.ecnd",
            ],
            17,
        ),
        (
            &[
                "rerank",
                "--features",
                "s.ecnf",
                "--meta",
                "s.meta.csv",
                "--t",
                "60",
                "--out",
                "x.ecnd",
            ],
            18,
        ),
    ];
    for (args, code) in cases {
        let out = ecn(d, args);
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        let stderr = String::from_utf8(out.stderr).unwrap();
        assert_eq!(stderr.lines().count(), 1, "{stderr}");
        assert!(stderr.starts_with("error: "));
        assert!(out.stdout.is_empty());
    }
    assert!(!d.join("x.ecnd").exists());

    let usage = ecn(d, &["rerank", "--meta", "s.meta.csv", "--out", "x.ecnd"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn help_documents_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let help = ok(dir.path(), &["--help"]);
    assert!(help.contains("Exit codes:"));
    assert!(help.contains("18  neighborhood"));
}

#[test]
fn bench_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["bench", "--sizes", "40,80", "--runs", "2"]);
    assert!(out.contains("40 -> 80"), "{out}");
    let none = ecn(dir.path(), &["bench", "--sizes", "40", "--method", "none"]);
    assert_eq!(none.status.code(), Some(17));
}
