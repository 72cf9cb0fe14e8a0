use std::path::PathBuf;

use absnet::corpus::{extract_pairs, parse_article, TextCaps, WarningKind};

fn fixture(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    std::fs::read(path).unwrap()
}

fn pair_ids(name: &str) -> (Vec<String>, Vec<WarningKind>) {
    let (doc, mut warnings) = parse_article(&fixture(name)).unwrap();
    let (pairs, w) = extract_pairs(&doc, 60, TextCaps::default());
    warnings.extend(w);
    (
        pairs.into_iter().map(|p| p.pair_id).collect(),
        warnings.into_iter().map(|w| w.kind).collect(),
    )
}

#[test]
fn hand_counted_pairs() {
    let (a, wa) = pair_ids("article_a.xml");
    assert_eq!(a, ["A-f1-p2", "A-f1-p4", "A-f2-p5"]);
    assert!(wa.is_empty());

    let (b, wb) = pair_ids("article_b.xml");
    assert_eq!(
        b,
        [
            "B-housing-p1",
            "B-housing-p3",
            "B-circuit-p1",
            "B-circuit-p2",
            "B-photo-caption"
        ]
    );
    assert!(wb.is_empty());

    let (c, wc) = pair_ids("article_c.xml");
    assert_eq!(c, ["C-deflection-p1", "C-loadstrain-p2", "C-loadstrain-p3"]);
    assert_eq!(wc, [WarningKind::MissingFigurePayload]);

    assert_eq!(a.len() + b.len() + c.len(), 11);
}

#[test]
fn golden_pair_is_caption_then_paragraph() {
    let (doc, _) = parse_article(&fixture("article_a.xml")).unwrap();
    let (pairs, _) = extract_pairs(&doc, 60, TextCaps::default());
    let pair = pairs.iter().find(|p| p.pair_id == "A-f1-p4").unwrap();
    let want: Vec<Vec<&str>> = vec![
        vec!["temperature", "profile", "across", "the", "plate"],
        vec![
            "as", "seen", "in", "fig", "1", "the", "kink", "sharpens", "when", "the", "ratio",
            "grows",
        ],
    ];
    assert_eq!(pair.text.sentences, want);
    assert_eq!(pair.source, "Mathematical Problems in Engineering");
    assert_eq!(pair.label, None);
    assert_eq!(pair.image.pixels.dim(), (60, 60, 3));
}

#[test]
fn formula_and_entities_in_fixture_text() {
    let (doc, _) = parse_article(&fixture("article_a.xml")).unwrap();
    let (pairs, _) = extract_pairs(&doc, 60, TextCaps::default());
    let mesh = pairs.iter().find(|p| p.pair_id == "A-f2-p5").unwrap();
    assert_eq!(
        mesh.text.sentences[0],
        ["finite", "element", "mesh", "boundary", "nodes"]
    );
    let para3 = &doc.paragraphs[2];
    assert!(absnet::corpus::clean_text(&para3.raw).sentences[0].contains(&"formula".to_owned()));
}

#[test]
fn caption_only_pair_has_only_caption() {
    let (doc, _) = parse_article(&fixture("article_b.xml")).unwrap();
    let (pairs, _) = extract_pairs(&doc, 60, TextCaps::default());
    let photo = pairs
        .iter()
        .find(|p| p.pair_id == "B-photo-caption")
        .unwrap();
    assert_eq!(photo.text.sentences.len(), 1);
    assert_eq!(photo.text.sentences[0][0], "photograph");
}
