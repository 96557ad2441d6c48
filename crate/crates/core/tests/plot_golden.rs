//! The regret plot is compared byte for byte against a stored rendering.

use ssp_po::harness::plot::render_regret_svg;

fn curves() -> Vec<(u64, Vec<f64>)> {
    (0..3u64)
        .map(|s| (s, (1..=300).map(|k| (k as f64).sqrt() * (2.0 + s as f64) + (k % 7) as f64 * 0.1).collect()))
        .collect()
}

#[test]
fn matches_fixture() {
    let svg = render_regret_svg(&curves(), "fixture");
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/regret.svg");
    if std::env::var_os("UPDATE_FIXTURES").is_some() {
        std::fs::write(path, &svg).unwrap();
    }
    let expected = std::fs::read_to_string(path).expect("fixture present; set UPDATE_FIXTURES=1 to create it");
    assert_eq!(svg, expected);
}
