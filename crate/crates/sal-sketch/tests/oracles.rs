mod support;

use support::Moment;

const STREAMS: usize = 100;
const SEED: u64 = 0x5a1_0c4e;

fn assert_passed(o: support::Outcome) {
    assert!(
        o.passed,
        "{}: {} of {} checks failed, worst {:.3}; first: {:?}",
        o.name, o.failures, o.checks, o.worst, o.first_failure
    );
}

#[test]
fn exp_histogram_count() {
    assert_passed(support::exp_histogram_count(STREAMS, SEED));
}

#[test]
fn sum() {
    assert_passed(support::sum_var(Moment::Sum, STREAMS, SEED));
}

#[test]
fn ave() {
    assert_passed(support::sum_var(Moment::Mean, STREAMS, SEED));
}

#[test]
fn var() {
    assert_passed(support::sum_var(Moment::Variance, STREAMS, SEED));
}

#[test]
fn topk() {
    assert_passed(support::topk(STREAMS, SEED));
}

#[test]
fn median() {
    assert_passed(support::median(STREAMS, SEED));
}

#[test]
fn countdistinct() {
    assert_passed(support::countdistinct(STREAMS, SEED));
}
