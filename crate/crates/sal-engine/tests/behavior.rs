use std::sync::Arc;

use sal_ast::{check, TupleSchema};
use sal_engine::{
    collapse_update, compile, csv_header, format_row, Cell, Engine, EngineConfig, Feature,
    FeatureMap, Label, Mode, NetflowTuple, Row,
};

const BASIC: &str = include_str!("../../../programs/basic.sal");
const SERVERS: &str = include_str!("../../../programs/servers.sal");

const HEADER: &str = "WindowSize = 1000;
Netflows = VastStream(\"localhost\", 9999);
PARTITION Netflows By SourceIp, DestIp;
HASH SourceIp WITH IpHashFunction;
HASH DestIp WITH IpHashFunction;
";

fn engine(src: &str) -> Engine {
    let program = check(src, &TupleSchema::netflow()).unwrap();
    Engine::new(Arc::new(compile(program)), EngineConfig::default())
}

fn flow(time: f64, src: &str, dst: &str, src_bytes: i64) -> NetflowTuple {
    NetflowTuple {
        time_seconds: time,
        parse_date: "2013-04-10 08:00:00".into(),
        ip_layer_protocol: "TCP".into(),
        source_ip: src.into(),
        dest_ip: dst.into(),
        source_port: 40000,
        dest_port: 80,
        duration_seconds: 1.0,
        src_payload_bytes: 10,
        dest_payload_bytes: 20,
        src_total_bytes: src_bytes,
        dest_total_bytes: 100,
        src_packet_count: 1,
        dest_packet_count: 2,
        label: None,
    }
}

fn stream_id(e: &Engine, name: &str) -> usize {
    e.graph()
        .program
        .streams
        .iter()
        .position(|s| s.name == name)
        .unwrap()
}

#[test]
fn basic_program_graph() {
    let e = engine(BASIC);
    assert_eq!(
        e.graph().to_string(),
        "KeyedDemux(DestIp) -> FeatureGen(ave SrcTotalBytes, name Feature1) -> FilterNode(Filtered)"
    );
    assert!(e.graph().warnings.is_empty());
}

#[test]
fn empty_pipeline_warns() {
    let src = HEADER;
    let program = check(src, &TupleSchema::netflow()).unwrap();
    let g = compile(program);
    assert!(g.is_empty());
    assert!(g
        .warnings
        .iter()
        .any(|w| w.message.contains("no pipeline statements")));
}

#[test]
fn server_program_graph() {
    let e = engine(SERVERS);
    let g = e.graph();
    assert_eq!(g.nodes.len(), 16);
    assert_eq!(g.count("KeyedDemux"), 2);
    assert!(g.count("FeatureGen") >= 8);
    assert_eq!(g.count("FilterNode"), 1);
    assert_eq!(g.count("TransformNode"), 1);
    assert_eq!(g.count("Project"), 1);
    assert_eq!(g.count("CollapsedConsumer"), 2);
    // ave and var of one column share a sketch per key
    let dest = stream_id(&e, "Servers");
    assert_eq!(g.layouts[dest].sketches.len(), 4);
}

#[test]
fn basic_program_two_tuples() {
    let e = engine(BASIC);
    let filtered = stream_id(&e, "Filtered");
    for _ in 0..2 {
        let trace = e.process_tuple(&flow(1.0, "S", "D", 2000).to_row());
        assert!(trace.present[filtered]);
    }
    assert_eq!(
        e.feature_map().get("D", "Feature1"),
        Some(Feature::Scalar(2000.0))
    );
    let small = e.process_tuple(&flow(2.0, "S", "E", 500).to_row());
    assert!(!small.present[filtered]);
    assert_eq!(e.metrics().filtered, 1);
    assert_eq!(e.metrics().tuples, 3);
}

#[test]
fn forward_feature_reference_is_rejected() {
    let src = format!(
        "{HEADER}VertsByDest = STREAM Netflows BY DestIp;\nEarly = FILTER VertsByDest BY Feature1 > 1000;\nFeature1 = FOREACH VertsByDest GENERATE ave(SrcTotalBytes);\n"
    );
    assert!(check(&src, &TupleSchema::netflow()).is_err());
}

#[test]
fn cold_key_drops_at_filter() {
    let src = format!(
        "{HEADER}VertsByDest = STREAM Netflows BY DestIp;\nBig = FILTER VertsByDest BY SrcTotalBytes > 1000;\nBigAve = FOREACH Big GENERATE ave(SrcTotalBytes);\nHeavy = FILTER VertsByDest BY BigAve > 0;\n"
    );
    let e = engine(&src);
    let heavy = stream_id(&e, "Heavy");
    assert!(!e.process_tuple(&flow(1.0, "S", "D", 500).to_row()).present[heavy]);
    assert_eq!(e.metrics().not_ready, 1);
    assert_eq!(e.metrics().filtered, 1);
    assert!(e.process_tuple(&flow(2.0, "S", "D", 2000).to_row()).present[heavy]);
    assert!(e.process_tuple(&flow(3.0, "S", "D", 500).to_row()).present[heavy]);
}

#[test]
fn transform_time_difference() {
    let src = format!(
        "{HEADER}DestSrc = STREAM Netflows BY DestIp, SourceIp;\nTimeLapseSeries = FOREACH DestSrc TRANSFORM (TimeSeconds - TimeSeconds.prev(1)) : TimeDiff;\n"
    );
    let e = engine(&src);
    let first = e.process_tuple(&flow(10.0, "S1", "D1", 1).to_row());
    assert!(first.derived.is_empty());
    assert_eq!(e.metrics().transform_pending, 1);
    // another pair in between does not disturb the history
    e.process_tuple(&flow(12.0, "S2", "D1", 1).to_row());
    let second = e.process_tuple(&flow(25.0, "S1", "D1", 1).to_row());
    assert_eq!(second.derived.len(), 1);
    let (_, row) = &second.derived[0];
    assert_eq!(row[0].to_string(), "D1");
    assert_eq!(row[1].to_string(), "S1");
    assert_eq!(row[2].as_f64(), Some(15.0));
}

#[test]
fn division_by_zero_drops_and_counts() {
    let src = format!(
        "{HEADER}ByDest = STREAM Netflows BY DestIp;\nRatio = FOREACH ByDest TRANSFORM SrcTotalBytes / DurationSeconds : Rate;\n"
    );
    let e = engine(&src);
    let mut t = flow(1.0, "S", "D", 100);
    t.duration_seconds = 0.0;
    let trace = e.process_tuple(&t.to_row());
    assert!(trace.derived.is_empty());
    assert_eq!(e.metrics().arithmetic, 1);
    t.duration_seconds = 4.0;
    let trace = e.process_tuple(&t.to_row());
    assert_eq!(trace.derived[0].1[1].as_f64(), Some(25.0));
}

#[test]
fn collapse_update_examples() {
    let m = FeatureMap::new(["DestOnly"]);
    collapse_update(&m, "D1", 0, "S1", vec![4.0], 10);
    collapse_update(&m, "D1", 0, "S2", vec![8.0], 10);
    let Some(Feature::Map(map)) = m.get("D1", "DestOnly") else {
        panic!("map feature missing")
    };
    let entries: Vec<(&str, &[f64])> = map.iter().collect();
    assert_eq!(entries, vec![("S1", &[4.0][..]), ("S2", &[8.0][..])]);
    let ave: f64 = map.column(0).sum::<f64>() / map.len() as f64;
    assert_eq!(ave, 6.0);

    collapse_update(&m, "D2", 0, "S1", vec![4.0], 10);
    collapse_update(&m, "D2", 0, "S1", vec![10.0], 10);
    let Some(Feature::Map(map)) = m.get("D2", "DestOnly") else {
        panic!("map feature missing")
    };
    assert_eq!(map.len(), 1);
    assert_eq!(map.get("S1"), Some(&[10.0][..]));
    assert_eq!(m.get("D3", "DestOnly"), None);
}

#[test]
fn collapsed_average_through_engine() {
    let src = format!(
        "{HEADER}DestSrc = STREAM Netflows BY DestIp, SourceIp;\nPairBytes = FOREACH DestSrc GENERATE ave(SrcTotalBytes);\nDestOnly = COLLAPSE DestSrc BY DestIp FOR PairBytes;\nAvePair = FOREACH DestOnly GENERATE ave(PairBytes);\n"
    );
    let e = engine(&src);
    e.process_tuple(&flow(1.0, "S1", "D1", 4).to_row());
    e.process_tuple(&flow(2.0, "S2", "D1", 8).to_row());
    assert_eq!(
        e.feature_map().get("D1", "AvePair"),
        Some(Feature::Scalar(6.0))
    );
    // S1's pair mean moves to 7; the map keeps only its latest value
    e.process_tuple(&flow(3.0, "S1", "D1", 10).to_row());
    assert_eq!(
        e.feature_map().get("D1", "AvePair"),
        Some(Feature::Scalar(7.5))
    );
}

#[test]
fn feature_rows() {
    let e = engine(BASIC);
    let g = e.graph();
    let header = csv_header(g, Mode::Train);
    assert_eq!(
        header,
        format!("{},Feature1,Label", NetflowTuple::header(false))
    );
    assert_eq!(
        csv_header(g, Mode::Test),
        format!("{},Feature1", NetflowTuple::header(false))
    );

    let mut t = flow(1.0, "S", "D", 500);
    t.label = Some(Label::Benign);
    let row = t.to_row();
    e.process_tuple(&row);
    let cells = e.emit_feature_row(&row);
    assert_eq!(cells, vec![Cell::Value(500.0)]);
    let line = format_row(&row, &cells, t.label, Mode::Train);
    assert_eq!(line, format!("{},500,benign", t.to_csv_line(false)));
}

#[test]
fn differently_keyed_feature_is_empty() {
    let src = format!(
        "{HEADER}BySrc = STREAM Netflows BY SourceIp;\nOut = FOREACH BySrc GENERATE ave(SrcTotalBytes);\nByDest = STREAM Netflows BY DestIp;\nIn = FOREACH ByDest GENERATE ave(DestTotalBytes);\n"
    );
    let e = engine(&src);
    e.process_tuple(&flow(1.0, "A", "B", 10).to_row());
    // a tuple whose source was only ever seen as a destination
    let row = flow(2.0, "B", "C", 10).to_row();
    let cells = e.emit_feature_row(&row);
    assert_eq!(cells, vec![Cell::Empty, Cell::Empty]);
    e.process_tuple(&row);
    assert_eq!(
        e.emit_feature_row(&row),
        vec![Cell::Value(10.0), Cell::Value(100.0)]
    );
}

#[test]
fn twenty_eight_feature_rows() {
    let fields = [
        "SrcTotalBytes",
        "DestTotalBytes",
        "DurationSeconds",
        "SrcPayloadBytes",
        "DestPayloadBytes",
        "SrcPacketCount",
        "DestPacketCount",
    ];
    let mut src = HEADER.to_string();
    for g in ["DestIp", "SourceIp"] {
        src.push_str(&format!("By{g} = STREAM Netflows BY {g};\n"));
        for f in fields {
            for op in ["ave", "var"] {
                src.push_str(&format!(
                    "{op}{f}By{g} = FOREACH By{g} GENERATE {op}({f});\n"
                ));
            }
        }
    }
    let e = engine(&src);
    let rows: Vec<Row> = (0..50)
        .map(|i| flow(i as f64, &format!("s{}", i % 7), &format!("d{}", i % 3), i).to_row())
        .collect();
    for cells in e.feed_batch(&rows) {
        assert_eq!(cells.len(), 28);
        assert!(cells.iter().all(|c| matches!(c, Cell::Value(_))));
    }
    let header = csv_header(e.graph(), Mode::FeaturesOnly);
    assert_eq!(header.split(',').count(), 14 + 28);
}

#[test]
fn topk_cell_is_top_fraction() {
    let src = format!(
        "{HEADER}VertsByDest = STREAM Netflows BY DestIp;\nTop2 = FOREACH VertsByDest GENERATE topk(DestPort,100,10,2);\nServers = FILTER VertsByDest BY Top2.value(0) + Top2.value(1) > 0.9;\n"
    );
    let e = engine(&src);
    let servers = stream_id(&e, "Servers");
    let mut t = flow(1.0, "S", "D", 1);
    for i in 0..10 {
        t.dest_port = if i < 9 { 80 } else { 443 };
        let trace = e.process_tuple(&t.to_row());
        assert!(trace.present[servers]);
    }
    assert_eq!(e.emit_feature_row(&t.to_row()), vec![Cell::Value(0.9)]);
    // 9/11 + 1/11 still passes; a third port pushes the pair below 0.9
    t.dest_port = 8080;
    assert!(e.process_tuple(&t.to_row()).present[servers]);
    t.dest_port = 8081;
    assert!(!e.process_tuple(&t.to_row()).present[servers]);
}

#[test]
fn single_threaded_runs_are_identical() {
    let run = || {
        let e = engine(SERVERS);
        let rows: Vec<Row> = (0..3000)
            .map(|i| {
                let mut t = flow(
                    i as f64 * 0.5,
                    &format!("s{}", i % 13),
                    &format!("d{}", i % 5),
                    (i * 37) % 1000,
                );
                t.dest_port = [80, 443, 22][(i % 7 % 3) as usize];
                t.to_row()
            })
            .collect();
        let cells = e.feed_batch(&rows);
        (format!("{cells:?}"), e.dump_lines())
    };
    assert_eq!(run(), run());
}

#[test]
fn parallel_feed_matches_sequential() {
    let src = SERVERS;
    let rows: Vec<Row> = (0..4000)
        .map(|i| {
            let mut t = flow(
                i as f64,
                &format!("s{}", i % 17),
                &format!("d{}", i % 11),
                (i * 7919) % 5000,
            );
            t.dest_port = [80, 443, 53, 8080][(i / 3 % 4) as usize];
            t.to_row()
        })
        .collect();
    let program = check(src, &TupleSchema::netflow()).unwrap();
    let graph = Arc::new(compile(program));
    let one = Engine::new(graph.clone(), EngineConfig::default());
    let four = Engine::new(
        graph,
        EngineConfig {
            workers: 4,
            ..EngineConfig::default()
        },
    );
    let a: Vec<Vec<Cell>> = rows.chunks(1000).flat_map(|c| one.feed_batch(c)).collect();
    let b: Vec<Vec<Cell>> = rows.chunks(1000).flat_map(|c| four.feed_batch(c)).collect();
    assert_eq!(a, b);
    assert_eq!(one.dump_lines(), four.dump_lines());
    assert_eq!(one.metrics().tuples, four.metrics().tuples);
}
