//! N-Triples parsing and serialization checked against an independent
//! parser and against itself.

use kgqa_core::rdf::{parse_ntriples_str, to_ntriples, Term, Triple};
use oxttl::NTriplesParser;
use proptest::prelude::*;

fn reference_parse(text: &str) -> Vec<oxrdf::Triple> {
    NTriplesParser::new()
        .for_slice(text)
        .collect::<Result<Vec<_>, _>>()
        .expect("reference parser accepts the document")
}

/// Our term compared with the reference parser's view of the same term.
fn same_term(ours: &Term, theirs: &oxrdf::Term) -> bool {
    match (ours, theirs) {
        (Term::Iri { lexical }, oxrdf::Term::NamedNode(n)) => lexical == n.as_str(),
        (Term::BlankNode { lexical }, oxrdf::Term::BlankNode(b)) => lexical == b.as_str(),
        (Term::Literal { lexical, datatype, language }, oxrdf::Term::Literal(l)) => {
            lexical == l.value()
                // Language tags are case-insensitive; the reference parser
                // normalises them to lowercase.
                && language.as_deref().map(str::to_lowercase).as_deref() == l.language()
                && match datatype {
                    Some(dt) => dt == l.datatype().as_str(),
                    None => l.language().is_some() || l.datatype().as_str().ends_with("#string"),
                }
        }
        _ => false,
    }
}

fn assert_agrees(text: &str) {
    let ours = parse_ntriples_str(text).unwrap();
    let theirs = reference_parse(text);
    assert_eq!(ours.len(), theirs.len());
    for (a, b) in ours.iter().zip(&theirs) {
        assert!(same_term(&a.subject, &b.subject.clone().into()), "{a:?} vs {b}");
        assert_eq!(a.predicate.lexical(), b.predicate.as_str());
        assert!(same_term(&a.object, &b.object), "{a:?} vs {b}");
    }
}

#[test]
fn escapes_match_reference_parser() {
    let doc = concat!(
        "<http://ex.org/a> <http://ex.org/p> \"tab\\tnew\\nline \\\"quoted\\\" back\\\\slash\" .\n",
        "<http://ex.org/a> <http://ex.org/p> \"\\u00E9t\\u00e9 \\U0001F600 \\r\\b\\f\\'\" .\n",
        "<http://ex.org/a> <http://ex.org/p> \"caf\u{e9} \u{20ac}\"@fr-CA .\n",
        "_:b1 <http://ex.org/p> \"42\"^^<http://www.w3.org/2001/XMLSchema#integer> .\n",
        "<http://ex.org/\\u00E9> <http://ex.org/p> <http://ex.org/b> . # trailing comment\n",
        "\n# comment line\n",
    );
    assert_agrees(doc);
}

fn literal_strategy() -> impl Strategy<Value = Term> {
    let text = "[\\PC\\t\\n\\r\"\\\\]{0,24}";
    prop_oneof![
        text.prop_map(Term::literal),
        (text, "[a-z]{2}(-[A-Z]{2})?").prop_map(|(v, l)| Term::lang_literal(v, l)),
        (-1_000_000i64..1_000_000)
            .prop_map(|n| Term::typed_literal(n.to_string(), "http://www.w3.org/2001/XMLSchema#integer")),
    ]
}

fn triple_strategy() -> impl Strategy<Value = Triple> {
    (
        prop_oneof![
            "[a-z0-9]{1,8}".prop_map(|s| Term::iri(format!("http://ex.org/e/{s}"))),
            "[a-z][a-z0-9]{0,6}".prop_map(Term::blank),
        ],
        "[a-zA-Z]{1,8}".prop_map(|p| Term::iri(format!("http://ex.org/p/{p}"))),
        prop_oneof![
            literal_strategy(),
            "[a-z0-9\u{e9}]{1,8}".prop_map(|s| Term::iri(format!("http://ex.org/o/{s}"))),
        ],
    )
        .prop_map(|(subject, predicate, object)| Triple { subject, predicate, object })
}

proptest! {
    #[test]
    fn serialization_round_trips(triples in prop::collection::vec(triple_strategy(), 0..20)) {
        let text = to_ntriples(&triples);
        prop_assert_eq!(parse_ntriples_str(&text).unwrap(), triples);
    }

    #[test]
    fn serialization_is_read_identically_by_reference_parser(
        triples in prop::collection::vec(triple_strategy(), 1..10)
    ) {
        assert_agrees(&to_ntriples(&triples));
    }
}
