use std::collections::{BTreeMap, BTreeSet};

use nhdp_core::export::{export_dot, export_json, import_json};
use nhdp_core::ingest::Vocabulary;
use nhdp_core::model::{Hyperparameters, Stick, TopicTree};
use nhdp_core::rng::rng_for;
use proptest::prelude::*;
use rand::Rng;

fn random_tree(seed: u64, vocab: usize) -> TopicTree {
    let mut rng = rng_for(seed, &[]);
    let hyper = Hyperparameters { truncation: vec![3, 3, 2], ..Default::default() };
    let lambda = |rng: &mut dyn rand::RngCore| -> Vec<f64> { (0..vocab).map(|_| rng.random_range(0.01..30.0)).collect() };
    let mut tree = TopicTree::new(hyper, lambda(&mut rng)).unwrap();
    let mut frontier = vec![0];
    while let Some(p) = frontier.pop() {
        let cap = tree.hyper().max_children(tree.node(p).depth());
        for _ in 0..rng.random_range(0..=cap) {
            let stick = Stick::new(rng.random_range(0.2..9.0), rng.random_range(0.2..9.0));
            frontier.push(tree.add_child(p, lambda(&mut rng), stick).unwrap());
        }
    }
    let raw: Vec<f64> = (0..tree.len()).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
    let total: f64 = raw.iter().sum();
    tree.set_usage(raw.iter().map(|u| u / total).collect()).unwrap();
    tree
}

fn awkward_vocab(n: usize) -> Vocabulary {
    let odd = ["say \"hi\"", "back\\slash", "multi\nline", "tab\there", "plain"];
    let tokens: Vec<String> = (0..n).map(|i| format!("{}{i}", odd[i % odd.len()])).collect();
    Vocabulary::from_columns(tokens, vec![1; n], vec![1; n]).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    Str(String),
    Punct(&'static str),
}

/// Tokenizer for the DOT subset the exporter may use.
fn lex(src: &str) -> Vec<Tok> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars[i] {
                        '"' => break,
                        '\\' => {
                            i += 1;
                            s.push(match chars[i] {
                                'n' => '\n',
                                other => other,
                            });
                        }
                        other => s.push(other),
                    }
                    i += 1;
                }
                i += 1;
                out.push(Tok::Str(s));
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push(Tok::Punct("->"));
                i += 2;
            }
            '{' | '}' | '[' | ']' | '=' | ',' | ';' => {
                out.push(Tok::Punct(match c {
                    '{' => "{",
                    '}' => "}",
                    '[' => "[",
                    ']' => "]",
                    '=' => "=",
                    ',' => ",",
                    _ => ";",
                }));
                i += 1;
            }
            _ => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                }
                assert!(i > start, "unexpected character {c:?}");
                out.push(Tok::Id(chars[start..i].iter().collect()));
            }
        }
    }
    out
}

#[derive(Debug, Default)]
struct Graph {
    nodes: BTreeMap<String, BTreeMap<String, String>>,
    edges: BTreeMap<(String, String), BTreeMap<String, String>>,
}

fn parse_dot(src: &str) -> Graph {
    let toks = lex(src);
    let mut pos = 0;
    let mut next = || {
        pos += 1;
        toks[pos - 1].clone()
    };
    assert_eq!(next(), Tok::Id("digraph".into()));
    let _name = next();
    assert_eq!(next(), Tok::Punct("{"));
    let mut g = Graph::default();
    let name_of = |t: Tok| match t {
        Tok::Id(s) | Tok::Str(s) => s,
        other => panic!("expected an identifier, got {other:?}"),
    };
    loop {
        let first = next();
        if first == Tok::Punct("}") {
            break;
        }
        let head = name_of(first);
        let mut tok = next();
        let mut target = None;
        if tok == Tok::Punct("->") {
            target = Some(name_of(next()));
            tok = next();
        }
        let mut attrs = BTreeMap::new();
        if tok == Tok::Punct("[") {
            loop {
                let key = name_of(next());
                assert_eq!(next(), Tok::Punct("="));
                attrs.insert(key, name_of(next()));
                match next() {
                    Tok::Punct(",") => continue,
                    Tok::Punct("]") => break,
                    other => panic!("bad attribute list near {other:?}"),
                }
            }
            tok = next();
        }
        assert_eq!(tok, Tok::Punct(";"));
        match target {
            Some(t) => {
                g.edges.insert((head, t), attrs);
            }
            None if head == "node" || head == "graph" || head == "edge" => {}
            None => {
                g.nodes.insert(head, attrs);
            }
        }
    }
    assert_eq!(pos, toks.len(), "trailing tokens after the graph");
    g
}

/// Kept nodes and edge weights recomputed from the tree's raw parameters.
fn expected(tree: &TopicTree, prune: f64) -> (BTreeSet<String>, BTreeMap<(String, String), f64>) {
    let usage = tree.usage().unwrap();
    let mut mass = usage.to_vec();
    for i in (1..tree.len()).rev() {
        let p = tree.node(i).parent().unwrap();
        mass[p] += mass[i];
    }
    let mut kept = vec![false; tree.len()];
    kept[0] = true;
    let mut nodes = BTreeSet::from([tree.node(0).id.to_string()]);
    let mut edges = BTreeMap::new();
    for i in 0..tree.len() {
        let node = tree.node(i);
        let mut remaining = 1.0;
        for (pos, &c) in node.children().iter().enumerate() {
            let s = node.sticks[pos];
            let v = s.a / (s.a + s.b);
            let w = v * remaining;
            remaining *= 1.0 - v;
            if kept[i] && mass[c] >= prune {
                kept[c] = true;
                nodes.insert(tree.node(c).id.to_string());
                edges.insert((node.id.to_string(), tree.node(c).id.to_string()), w);
            }
        }
    }
    (nodes, edges)
}

#[test]
fn dot_reparses_to_the_pruned_tree() {
    for seed in 0..30 {
        let tree = random_tree(seed, 12);
        let vocab = awkward_vocab(12);
        for prune in [0.0, 0.02, 0.1] {
            let dot = export_dot(&tree, Some(&vocab), prune).unwrap();
            let g = parse_dot(&dot);
            let (nodes, edges) = expected(&tree, if prune == 0.0 { f64::NEG_INFINITY } else { prune });
            assert_eq!(g.nodes.keys().cloned().collect::<BTreeSet<_>>(), nodes, "seed {seed} prune {prune}");
            assert_eq!(g.edges.keys().cloned().collect::<BTreeSet<_>>(), edges.keys().cloned().collect(), "seed {seed} prune {prune}");
            for (edge, w) in &edges {
                let shown: f64 = g.edges[edge]["label"].parse().unwrap();
                assert!((shown - w).abs() <= 5e-5, "{edge:?}: {shown} vs {w}");
            }
            for (id, attrs) in &g.nodes {
                let label = &attrs["label"];
                let node = tree.node(tree.find(&id.parse().unwrap()).unwrap());
                assert!(label.starts_with(id.as_str()));
                let total: f64 = node.lambda.iter().sum();
                let best = (0..12).max_by(|&a, &b| node.lambda[a].total_cmp(&node.lambda[b]).then(b.cmp(&a))).unwrap();
                let expected_line = format!("{} {:.4}", vocab.token(best).unwrap(), node.lambda[best] / total);
                assert!(label.contains(&expected_line), "{label:?} lacks {expected_line:?}");
            }
        }
    }
}

#[test]
fn json_export_round_trips_without_pruning() {
    for seed in 0..30 {
        let tree = random_tree(seed, 7);
        let back = import_json(&export_json(&tree, None, 0.0).unwrap()).unwrap();
        assert_eq!(back.len(), tree.len());
        assert_eq!(back.hyper(), tree.hyper());
        for i in 0..tree.len() {
            let j = back.find(&tree.node(i).id).expect("same ids without pruning");
            assert_eq!(back.node(j).lambda, tree.node(i).lambda);
            assert_eq!(back.node(j).sticks, tree.node(i).sticks);
            assert_eq!(back.usage().unwrap()[j], tree.usage().unwrap()[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pruned_json_keeps_exactly_the_dot_nodes(seed in 0u64..10_000, prune in 0.001f64..0.3) {
        let tree = random_tree(seed, 5);
        let dot_nodes = parse_dot(&export_dot(&tree, None, prune).unwrap()).nodes.len();
        let back = import_json(&export_json(&tree, None, prune).unwrap()).unwrap();
        prop_assert_eq!(back.len(), dot_nodes);
        for i in 0..back.len() {
            let node = back.node(i);
            prop_assert!(node.parent().is_none_or(|p| p < i));
            prop_assert!(node.lambda.iter().all(|&l| l > 0.0));
        }
    }
}
