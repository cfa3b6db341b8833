//! Reverse-mode gradients against central finite differences.

mod gradcheck_cases;

use gradcheck_cases::{worst, Case, MODEL_CASES, OP_CASES, TOLERANCE};

fn assert_case(cases: &[Case], name: &str) {
    let (_, case) = cases.iter().find(|(n, _)| *n == name).expect("known case");
    let err = worst(*case);
    assert!(err < TOLERANCE, "{name}: relative error {err:e}");
}

#[test]
fn every_op_case_passes() {
    for (name, _) in OP_CASES {
        assert_case(OP_CASES, name);
    }
}

#[test]
fn mlp_gradients() {
    assert_case(MODEL_CASES, "mlp");
}

#[test]
fn rnn_gradients() {
    assert_case(MODEL_CASES, "rnn");
}

#[test]
fn stgcn_gradients() {
    assert_case(MODEL_CASES, "stgcn");
}
