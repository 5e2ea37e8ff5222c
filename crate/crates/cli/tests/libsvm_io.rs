use ncg_cli::Dataset;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        -10.0f64..10.0,
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

fn dataset() -> impl Strategy<Value = Dataset> {
    prop::collection::vec(
        (finite(), prop::collection::btree_map(0usize..40, finite(), 0..8)),
        1..20,
    )
    .prop_map(|rows| {
        let labels = rows.iter().map(|(b, _)| *b).collect();
        let rows: Vec<Vec<(usize, f64)>> = rows
            .into_iter()
            .map(|(_, m)| m.into_iter().collect())
            .collect();
        let dim = rows
            .iter()
            .filter_map(|r| r.last().map(|(j, _)| j + 1))
            .max()
            .unwrap_or(0);
        Dataset { labels, rows, dim }
    })
}

proptest! {
    #[test]
    fn write_then_read_is_bit_exact(d in dataset()) {
        let mut buf = Vec::new();
        d.write(&mut buf).unwrap();
        let back = Dataset::parse(buf.as_slice()).unwrap();
        prop_assert_eq!(back.dim, d.dim);
        prop_assert_eq!(back.labels.len(), d.labels.len());
        for (a, b) in back.labels.iter().zip(&d.labels) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        for (ra, rb) in back.rows.iter().zip(&d.rows) {
            prop_assert_eq!(ra.len(), rb.len());
            for ((ja, va), (jb, vb)) in ra.iter().zip(rb) {
                prop_assert_eq!(ja, jb);
                prop_assert_eq!(va.to_bits(), vb.to_bits());
            }
        }
    }
}

#[test]
fn file_round_trip_and_densify() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.svm");
    std::fs::write(&path, "1 1:0.5 3:2.0\n0\n-1 2:-1e-3 # comment\n").unwrap();
    let d = Dataset::read(&path).unwrap();
    assert_eq!(d.n(), 3);
    assert_eq!(d.dim, 3);
    let p = d.to_problem(ncg_core::Link::Tanh).unwrap();
    assert_eq!(p.row(2), &[0.0, -1e-3, 0.0]);
    assert_eq!(p.label(2), -1.0);
}
