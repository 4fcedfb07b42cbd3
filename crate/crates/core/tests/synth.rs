use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use transcompat::corpus::{generate_synthetic, SynthConfig};
use transcompat::*;

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        items_per_category: 30,
        pairs_per_relation: 60,
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn same_seed_writes_identical_bytes() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_synthetic(&small(4), a.path()).unwrap();
    generate_synthetic(&small(4), b.path()).unwrap();
    generate_synthetic(&small(5), c.path()).unwrap();
    let (sa, sb, sc) = (snapshot(a.path()), snapshot(b.path()), snapshot(c.path()));
    assert_eq!(sa, sb);
    assert_eq!(
        sa.keys().collect::<Vec<_>>(),
        ["items.jsonl", "pairs.tsv", "synth_config.json", "textual.tnfc", "visual.tnfc"]
    );
    assert_ne!(sa["pairs.tsv"], sc["pairs.tsv"]);
}

#[test]
fn default_corpus_matches_declared_shape() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate_synthetic(&SynthConfig::default(), dir.path()).unwrap();
    let corpus = load_corpus(dir.path()).unwrap();
    assert_eq!(corpus.num_items(), 800);
    assert_eq!(corpus.categories().len(), 4);
    assert!(corpus.graph().num_relations() >= 3);
    for m in ["textual", "visual"] {
        assert_eq!(corpus.feature_table(m).unwrap().dim(), 32);
    }
    let total: usize = s.split_sizes.iter().sum();
    assert_eq!(total, s.relations.iter().map(|r| r.pairs).sum::<usize>());
    assert_eq!(s.split_sizes[0], total * 8 / 10);
    let hub = corpus.categories().iter().position(|c| *c == s.one_to_many_head).unwrap();
    assert!(corpus.graph().complementary(hub).len() >= 2);
}

#[test]
fn relation_table_follows_the_training_category_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate_synthetic(&small(2), dir.path()).unwrap();
    let corpus = load_corpus(dir.path()).unwrap();
    let table = build_relation_table(&corpus, 16, false, 0);
    assert_eq!(table.num_rows(), s.relations.len());
    for r in &s.relations {
        let (v, _) = table.lookup(&r.head, &r.tail).unwrap();
        let (w, _) = table.lookup(&r.tail, &r.head).unwrap();
        assert!(v.iter().zip(&w).all(|(a, b)| *a == -*b));
    }
}
