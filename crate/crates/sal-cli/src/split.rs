//! Temporal scenario split with balanced malicious counts.

use anyhow::{bail, Result};
use sal_engine::{Label, NetflowTuple};
use serde_json::{json, Value as Json};

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSplit {
    /// TimeSeconds of the last tuple of P1; P2 starts strictly later.
    pub split_time: f64,
    /// Index ranges into the time-sorted stream.
    pub p1: std::ops::Range<usize>,
    pub p2: std::ops::Range<usize>,
    pub malicious_p1: usize,
    pub malicious_p2: usize,
    /// Whether the input had to be sorted.
    pub resorted: bool,
}

impl ScenarioSplit {
    pub fn to_json(&self) -> Json {
        json!({
            "split_time": self.split_time,
            "p1": {"start": self.p1.start, "end": self.p1.end, "malicious": self.malicious_p1},
            "p2": {"start": self.p2.start, "end": self.p2.end, "malicious": self.malicious_p2},
            "resorted": self.resorted,
        })
    }
}

/// Sort `tuples` by time (stably) if needed and find the earliest cut
/// between distinct timestamps that balances malicious tuples. Tuples
/// sharing the boundary timestamp all go to P1.
pub fn split(tuples: &mut [NetflowTuple]) -> Result<ScenarioSplit> {
    let resorted = tuples
        .windows(2)
        .any(|w| w[0].time_seconds > w[1].time_seconds);
    if resorted {
        tuples.sort_by(|a, b| a.time_seconds.total_cmp(&b.time_seconds));
    }
    let is_bad = |t: &NetflowTuple| t.label == Some(Label::Malicious);
    let total = tuples.iter().filter(|t| is_bad(t)).count();
    match total {
        0 => bail!("no malicious tuples; the split is undefined"),
        1 => bail!("a single malicious tuple cannot be balanced across two parts"),
        _ => {}
    }
    let mut best: Option<(usize, usize, usize)> = None;
    let mut seen = 0;
    for i in 0..tuples.len() - 1 {
        seen += is_bad(&tuples[i]) as usize;
        if tuples[i].time_seconds == tuples[i + 1].time_seconds {
            continue;
        }
        let gap = seen.abs_diff(total - seen);
        if best.is_none_or(|(g, _, _)| gap < g) {
            best = Some((gap, i + 1, seen));
        }
        if seen * 2 >= total {
            break;
        }
    }
    let Some((gap, cut, m1)) = best else {
        bail!("all tuples share one timestamp; no temporal split exists");
    };
    if gap > 1 {
        bail!(
            "tied timestamps prevent a balanced split: the best cut leaves {m1} and {} malicious tuples",
            total - m1
        );
    }
    Ok(ScenarioSplit {
        split_time: tuples[cut - 1].time_seconds,
        p1: 0..cut,
        p2: cut..tuples.len(),
        malicious_p1: m1,
        malicious_p2: total - m1,
        resorted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(times: &[f64], bad: &[usize]) -> Vec<NetflowTuple> {
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| NetflowTuple {
                time_seconds: t,
                parse_date: "d".into(),
                ip_layer_protocol: "TCP".into(),
                source_ip: "1.1.1.1".into(),
                dest_ip: "2.2.2.2".into(),
                source_port: 1,
                dest_port: 2,
                duration_seconds: 0.0,
                src_payload_bytes: 0,
                dest_payload_bytes: 0,
                src_total_bytes: 0,
                dest_total_bytes: 0,
                src_packet_count: 0,
                dest_packet_count: 0,
                label: Some(if bad.contains(&i) {
                    Label::Malicious
                } else {
                    Label::Benign
                }),
            })
            .collect()
    }

    #[test]
    fn ten_in_a_thousand() {
        let times: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let bad: Vec<usize> = (0..10).map(|k| 37 + k * 97).collect();
        let mut s = stream(&times, &bad);
        let r = split(&mut s).unwrap();
        assert_eq!(r.split_time, bad[4] as f64);
        assert_eq!((r.malicious_p1, r.malicious_p2), (5, 5));
        assert_eq!(r.p1, 0..bad[4] + 1);
    }

    #[test]
    fn all_malicious_splits_at_median() {
        let times: Vec<f64> = (0..2000).map(|i| 10.0 + i as f64 * 0.5).collect();
        let all: Vec<usize> = (0..2000).collect();
        let r = split(&mut stream(&times, &all)).unwrap();
        assert_eq!(r.p1, 0..1000);
        assert_eq!(r.split_time, times[999]);
    }

    #[test]
    fn too_few_malicious() {
        let times: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert!(split(&mut stream(&times, &[])).is_err());
        assert!(split(&mut stream(&times, &[7])).is_err());
    }

    #[test]
    fn boundary_ties_go_to_first_part() {
        let times = [1.0, 2.0, 3.0, 3.0, 3.0, 4.0, 5.0];
        let r = split(&mut stream(&times, &[2, 6])).unwrap();
        assert_eq!(r.p1, 0..5);
        assert_eq!(r.split_time, 3.0);
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let times = [5.0, 1.0, 3.0, 2.0, 4.0];
        let mut s = stream(&times, &[0, 1]);
        let r = split(&mut s).unwrap();
        assert!(r.resorted);
        assert!(s.windows(2).all(|w| w[0].time_seconds <= w[1].time_seconds));
        assert_eq!((r.malicious_p1, r.malicious_p2), (1, 1));
        assert_eq!(r.split_time, 1.0);
    }

    #[test]
    fn unbalanceable_ties() {
        let times = [1.0, 1.0, 1.0, 2.0];
        assert!(split(&mut stream(&times, &[0, 1, 2, 3])).is_err());
    }

    /// Earliest cut between distinct timestamps with the smallest imbalance.
    fn scan(times: &[f64], bad: &[bool]) -> Option<(usize, usize)> {
        let total = bad.iter().filter(|&&b| b).count();
        (1..times.len())
            .filter(|&c| times[c - 1] != times[c])
            .map(|c| {
                let m1 = bad[..c].iter().filter(|&&b| b).count();
                (m1.abs_diff(total - m1), c, m1)
            })
            .min()
            .filter(|&(gap, _, _)| gap <= 1)
            .map(|(_, c, m1)| (c, m1))
    }

    proptest::proptest! {
        #[test]
        fn matches_scan(
            cells in proptest::collection::vec((0u8..40, proptest::bool::weighted(0.2)), 2..200)
        ) {
            let mut cells = cells;
            cells.sort_by_key(|c| c.0);
            let times: Vec<f64> = cells.iter().map(|c| c.0 as f64).collect();
            let bad: Vec<bool> = cells.iter().map(|c| c.1).collect();
            let idx: Vec<usize> = (0..bad.len()).filter(|&i| bad[i]).collect();
            let got = split(&mut stream(&times, &idx));
            let want = if idx.len() < 2 { None } else { scan(&times, &bad) };
            match (got, want) {
                (Ok(r), Some((cut, m1))) => {
                    proptest::prop_assert_eq!(r.p1, 0..cut);
                    proptest::prop_assert_eq!(r.malicious_p1, m1);
                    proptest::prop_assert!(r.malicious_p1.abs_diff(r.malicious_p2) <= 1);
                    proptest::prop_assert!(times[cut - 1] < times[cut]);
                }
                (Err(_), None) => {}
                (got, want) => proptest::prop_assert!(false, "{:?} vs {:?}", got.map(|r| r.p1), want),
            }
        }
    }
}
