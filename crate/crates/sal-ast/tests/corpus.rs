use sal_ast::{check, parse_source, OpKind, SalError, StatementKind, TupleSchema, TypedStatement};

const BASIC: &str = include_str!("../../../programs/basic.sal");
const SERVERS: &str = include_str!("../../../programs/servers.sal");
const PAIRS: &str = include_str!("../../../programs/pair_features.sal");

const HEADER: &str = r#"WindowSize = 1000;
Netflows = VastStream("localhost", 9999);
PARTITION Netflows By SourceIp, DestIp;
HASH SourceIp WITH IpHashFunction;
HASH DestIp WITH IpHashFunction;
"#;

/// Server-detection snippets in the order they build on each other.
const SNIPPETS: [&str; 7] = [
    "VertsByDest = STREAM Netflows BY DestIp;\nTop2 = FOREACH VertsByDest GENERATE topk(DestPort,10000,1000,2);\nServers = FILTER VertsByDest BY \n            top2.value(0) + top2.value(1) > 0.9;\n",
    "FlowsizeSumIn = FOREACH Servers GENERATE ave(SrcTotalBytes);\nFlowsizeSumOut = FOREACH Servers GENERATE ave(DestTotalBytes);\nFlowsizeVarIn = FOREACH Servers GENERATE var(SrcTotalBytes);\nFlowsizeVarOut = FOREACH Servers GENERATE var(DestTotalBytes);\n",
    "UniqueIn = FOREACH Servers GENERATE countdistinct(SrcTotalBytes);\nUniqueOut = FOREACH Servers GENERATE countdistinct(DestTotalBytes);\n",
    "DestSrc = STREAM Servers BY DestIp, SourceIp;\nTimeLapseSeries = FOREACH DestSrc TRANSFORM  \n               (TimeSeconds - TimeSeconds.prev(1)) : TimeDiff\n",
    "TimeDiffVar = FOREACH TimeLapseSeries GENERATE var(TimeDiff);\nTimeDiffMed = FOREACH TimeLapseSeries GENERATE median(TimeDiff);\n",
    "DestOnly = COLLAPSE TimeLapseSeries BY DestIp FOR TimeDiffVar, \n                                                  TimeDiffMed;\n",
    "AveTimeDiffVar = FOREACH DestOnly GENERATE ave(TimeDiffVar);\nVarTimeDiffVar = FOREACH DestOnly GENERATE var(TimeDiffVar);\n",
];

fn assemble(skip: Option<usize>) -> String {
    let mut src = HEADER.to_string();
    for (i, s) in SNIPPETS.iter().enumerate() {
        if Some(i) != skip {
            src.push_str(s);
        }
    }
    src
}

fn roundtrip(src: &str) {
    let p = parse_source(src).unwrap();
    let printed = p.to_string();
    let again = parse_source(&printed).unwrap();
    assert_eq!(again, p);
    assert_eq!(again.to_string(), printed);
}

#[test]
fn basic_program_shape() {
    let p = parse_source(BASIC).unwrap();
    assert_eq!(p.preamble.len(), 1);
    assert_eq!(p.preamble[0].value, 1000);
    assert_eq!(p.connections.len(), 1);
    assert_eq!(p.connections[0].host, "localhost");
    assert_eq!(p.connections[0].port, 9999);
    assert_eq!(p.partitions.len(), 1);
    assert_eq!(p.partitions[0].keys, vec!["SourceIp", "DestIp"]);
    assert_eq!(p.hashes.len(), 2);
    assert_eq!(p.pipeline.len(), 3);
    let t = check(BASIC, &TupleSchema::netflow()).unwrap();
    assert_eq!(t.stream("VertsByDest").unwrap().keys, vec!["DestIp"]);
    roundtrip(BASIC);
}

#[test]
fn all_snippets_assemble() {
    let all = parse_source(&assemble(None)).unwrap();
    assert_eq!(all.pipeline.len(), 16);
    // without the two countdistinct statements
    let without_unique = parse_source(&assemble(Some(2))).unwrap();
    assert_eq!(without_unique.pipeline.len(), 14);
    assert_eq!(parse_source(SERVERS).unwrap().pipeline, all.pipeline);
}

#[test]
fn server_program_validates() {
    let schema = TupleSchema::netflow();
    let t = check(SERVERS, &schema).unwrap();
    assert_eq!(
        t.stream("DestSrc").unwrap().keys,
        vec!["DestIp", "SourceIp"]
    );
    assert_eq!(
        t.stream("TimeLapseSeries").unwrap().keys,
        vec!["DestIp", "SourceIp"]
    );
    assert_eq!(t.stream("DestOnly").unwrap().keys, vec!["DestIp"]);
    assert_eq!(t.feature("Top2").unwrap().op.kind, OpKind::TopK);
    assert_eq!(t.feature("TimeDiffMed").unwrap().op.kind, OpKind::Median);
    assert!(t.feature("AveTimeDiffVar").unwrap().collapsed);
    assert_eq!(t.features.len(), 11);
    let collapses = t
        .statements
        .iter()
        .filter(|s| matches!(s, TypedStatement::Collapse { .. }))
        .count();
    assert_eq!(collapses, 1);
    // the only warning is the case-insensitive `top2` lookup (two reads)
    for w in &t.warnings {
        assert!(w.message.contains("ignoring case"), "{w}");
    }
    check(&assemble(Some(2)), &schema).unwrap();
}

#[test]
fn corpus_roundtrips() {
    for src in [BASIC, SERVERS, PAIRS, &assemble(None), &assemble(Some(2))] {
        roundtrip(src);
        check(src, &TupleSchema::netflow()).unwrap();
    }
}

#[test]
fn collapse_for_list() {
    let p = parse_source(SERVERS).unwrap();
    let collapse = p.pipeline.iter().find(|s| s.target == "DestOnly").unwrap();
    let StatementKind::Collapse { keep, features, .. } = &collapse.kind else {
        panic!("DestOnly is not a collapse");
    };
    assert_eq!(keep, &vec!["DestIp".to_string()]);
    assert_eq!(
        features,
        &vec!["TimeDiffVar".to_string(), "TimeDiffMed".to_string()]
    );
}

#[test]
fn undefined_source_alone() {
    let err = parse_source("X = FOREACH Y GENERATE ave(SrcTotalBytes);").unwrap_err();
    assert!(matches!(err, SalError::Semantic(_)));
    assert!(err
        .diagnostics()
        .iter()
        .any(|d| d.message.contains("stream `Y` is not defined")));
}

#[test]
fn diagnostics_are_deterministic() {
    let bad = format!("{HEADER}A = STREAM Netflows BY DestPort;\nB = FOREACH A GENERATE autocorrelation(x);\nC = FILTER Netflows BY z.prev(1) > 0;\n");
    let render = || {
        check(&bad, &TupleSchema::netflow())
            .unwrap_err()
            .diagnostics()
            .iter()
            .map(|d| d.render("bad.sal"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let first = render();
    for _ in 0..5 {
        assert_eq!(render(), first);
    }
    assert!(first.starts_with("bad.sal:6:1: error:"), "{first}");
}
