use absnet::train::gradcheck::{
    block_probe, check_block, gradient_check, Corrupted, BLOCKS, DEFAULT_EPS, TOLERANCE,
};

#[test]
fn every_block_matches_finite_differences() {
    let mut failures = Vec::new();
    for block in BLOCKS {
        let r = check_block(block).unwrap();
        println!(
            "{block:<26} max rel err {:.3e} ({} values, worst {}[{}]: {:e} vs {:e})",
            r.max_rel_err,
            r.values_checked,
            r.worst_entry,
            r.worst_index,
            r.worst_analytic,
            r.worst_numeric
        );
        if !r.passed() {
            failures.push(block);
        }
    }
    assert!(failures.is_empty(), "blocks over {TOLERANCE}: {failures:?}");
}

#[test]
fn linear_probe_is_exact() {
    let r = check_block("linear").unwrap();
    assert!(r.max_rel_err <= 1e-10, "{}", r.max_rel_err);
}

#[test]
fn corrupted_gradient_is_caught() {
    let probe = block_probe("classifier").unwrap();
    let bad = Corrupted {
        inner: &probe,
        factor: 1.01,
    };
    let r = gradient_check(&bad, DEFAULT_EPS);
    assert!(r.max_rel_err >= 9e-3, "{}", r.max_rel_err);
}

#[test]
fn unknown_block_is_an_error() {
    assert!(block_probe("nope").is_err());
}
