mod common;

use common::random_fd_check;

#[test]
fn tape_and_jets_agree_with_finite_differences() {
    for case in 0..40 {
        let c = random_fd_check(case).unwrap();
        assert!(c.grad_err < 1e-5, "case {case}: {c:?}");
        assert!(c.lap_err < 1e-5, "case {case}: {c:?}");
    }
}
