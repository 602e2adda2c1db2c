use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use semsort_core::fixtures;
use semsort_core::store;

fn semsort(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semsort"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_corpus(dir: &Path) {
    let corpus = dir.join("corpus");
    fs::create_dir(&corpus).unwrap();
    let docs = [
        "Cats and dogs play.\n\nThe dog chased the cat.\n\nBanks hold money.",
        "Money moves markets. Stock markets move.\n\nA bank lends money to the market.",
        "Dogs bark at cats.\n\nMusic and piano.\n\nThe pianist plays music on a piano.",
        "Cats sleep. Dogs sleep.\n\nThe market for pianos.\n\nMoney for music.",
    ];
    for (i, d) in docs.iter().enumerate() {
        fs::write(corpus.join(format!("{i}.txt")), d).unwrap();
    }
}

#[test]
fn vcdim_reports_a_match() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&semsort(&["vcdim", "--kind", "permutation", "--d", "3"], dir.path()));
    let row: Vec<&str> = out.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row, ["permutation", "3", "2", "2", "yes"]);
}

#[test]
fn usage_and_runtime_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(semsort(&["--frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(
        semsort(&["vcdim", "--kind", "circle", "--d", "3"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        semsort(&["rank", "--index", "missing.bin", "--term", "a"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        semsort(&["vcdim", "--kind", "permutation", "--d", "9"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(semsort(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn pipeline_from_corpus_to_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(d);
    fs::write(d.join("stop.txt"), "the\nand\na\nat\non\nto\nfor\n").unwrap();
    fs::write(
        d.join("pairs.tsv"),
        "w1\tw2\tscore\ncat\tdog\t9\nmoney\tbank\t8\nmusic\tpiano\t8.5\ncat\tmoney\t1\ndog\tpiano\t2\nmarket\tstock\t7\nbank\tmusic\t0.5\n",
    )
    .unwrap();

    let o = semsort(&["ingest", "corpus", "-o", "idx.bin", "--stopwords", "stop.txt"], d);
    stdout(&o);
    let idx = store::load_index(&d.join("idx.bin")).unwrap();
    assert!(idx.stemmed());
    assert_eq!(idx.num_contexts(), 11);
    assert!(idx.dictionary().id("the").is_none());

    // NSD scores, then preferences generated from them, are all satisfied by NSD.
    stdout(&semsort(
        &["score", "--index", "idx.bin", "--pairs", "pairs.tsv", "-o", "nsd.tsv"],
        d,
    ));
    let scored = fs::read_to_string(d.join("nsd.tsv")).unwrap();
    assert_eq!(scored.lines().count(), 7);
    assert!(scored
        .lines()
        .all(|l| l.split('\t').nth(2).unwrap().parse::<f64>().unwrap() <= 0.0));
    stdout(&semsort(
        &[
            "gen-prefs",
            "--index",
            "idx.bin",
            "--scores",
            "nsd.tsv",
            "-o",
            "self.tsv",
        ],
        d,
    ));
    let eval = stdout(&semsort(
        &[
            "eval", "--index", "idx.bin", "--prefs", "self.tsv", "--scores", "nsd.tsv",
        ],
        d,
    ));
    assert!(eval.contains("accuracy\t1\n"), "{eval}");

    // Human scores: train and evaluate the trained model.
    stdout(&semsort(
        &[
            "gen-prefs",
            "--index",
            "idx.bin",
            "--scores",
            "pairs.tsv",
            "-o",
            "prefs.tsv",
        ],
        d,
    ));
    assert_eq!(fs::read_to_string(d.join("prefs.tsv")).unwrap().lines().count(), 21);
    let train = stdout(&semsort(
        &[
            "train",
            "--index",
            "idx.bin",
            "--prefs",
            "prefs.tsv",
            "--model-out",
            "m.bin",
            "--report",
            "r.csv",
        ],
        d,
    ));
    assert!(train.starts_with("epochs "), "{train}");
    let report = fs::read_to_string(d.join("r.csv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), "epoch,delta,alpha,unsatisfied");
    let eval = stdout(&semsort(
        &["eval", "--index", "idx.bin", "--model", "m.bin", "--prefs", "prefs.tsv"],
        d,
    ));
    let acc: f64 = eval
        .lines()
        .next()
        .unwrap()
        .split('\t')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc > 0.5, "{eval}");

    let rank = stdout(&semsort(
        &[
            "rank", "--index", "idx.bin", "--model", "m.bin", "--term", "Cats", "-k", "3",
        ],
        d,
    ));
    let rows: Vec<&str> = rank.lines().collect();
    assert_eq!(rows.len(), 3);
    let dists: Vec<f64> = rows
        .iter()
        .map(|r| r.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(dists.windows(2).all(|w| w[0] <= w[1]));

    fs::write(d.join("groups.tsv"), "0\tanimals\n1\tfinance\n2\tanimals\n").unwrap();
    let delta = stdout(&semsort(
        &[
            "interpret",
            "--index",
            "idx.bin",
            "--final",
            "m.bin",
            "--groups",
            "groups.tsv",
        ],
        d,
    ));
    let lines: Vec<&str> = delta.lines().collect();
    assert_eq!(lines[0], "group\tinit\tfinal\tdelta");
    assert_eq!(lines.len(), 4);
    assert!(delta.contains("(unmapped)"));
}

#[test]
fn gss_scores_every_pair_of_the_list() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(d);
    stdout(&semsort(
        &["ingest", "corpus", "-o", "b.bin", "--granularity", "sentence"],
        d,
    ));
    fs::write(d.join("terms.txt"), "cats\ndogs\nmoney\nunicorn\n").unwrap();
    let o = semsort(&["gss", "--index", "b.bin", "--terms", "terms.txt", "-o", "gss.tsv"], d);
    stdout(&o);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unicorn"));
    let gss = fs::read_to_string(d.join("gss.tsv")).unwrap();
    assert_eq!(gss.lines().count(), 3);
    let o = semsort(
        &[
            "gss",
            "--index",
            "b.bin",
            "--top",
            "4",
            "--drop-flagged",
            "-o",
            "top.tsv",
        ],
        d,
    );
    stdout(&o);
    assert!(fs::read_to_string(d.join("top.tsv")).unwrap().lines().count() <= 6);
}

#[test]
fn fixture_ranking_and_preset_curve() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    store::save_index(&fixtures::fixture3(), &d.join("f.bin")).unwrap();
    let rank = stdout(&semsort(&["rank", "--index", "f.bin", "--term", "a", "-k", "2"], d));
    let expected = (3f64.ln() - 2f64.ln()) / (5f64.ln() - 2f64.ln());
    let rows: Vec<(String, f64)> = rank
        .lines()
        .map(|l| {
            let (t, v) = l.split_once('\t').unwrap();
            (t.to_string(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(), ["b", "c"]);
    assert!(rows.iter().all(|r| (r.1 - expected).abs() < 1e-12));

    let s = fixtures::synthetic_suite(5, 10, 60, 1);
    store::save_index(&s.index, &d.join("s.bin")).unwrap();
    semsort_core::store::tsv::write_scored_pairs(&d.join("s.tsv"), &s.scores, s.index.dictionary()).unwrap();
    let args = [
        "curve",
        "--index",
        "s.bin",
        "--scores",
        "s.tsv",
        "--preset",
        "small-wordsim",
        "--out-dir",
        "out",
    ];
    stdout(&semsort(&args, d));
    let curve = fs::read_to_string(d.join("out/curve.csv")).unwrap();
    let rows: Vec<&str> = curve.lines().collect();
    assert_eq!(rows[0], "m,trials,mean_acc,sem_acc,mean_rho,sem_rho");
    assert_eq!(rows.len(), 7);
    assert!(rows[1].starts_with("0,10,"));
    let raw = fs::read_to_string(d.join("out/raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 61);
}
