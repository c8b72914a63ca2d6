use ndarray::Array2;
use proptest::prelude::*;
use semtransfer::io::{format_table, parse_table};
use semtransfer::{Registry, Table};

proptest! {
    #[test]
    fn tables_survive_text_round_trip(
        vals in proptest::collection::vec(prop_oneof![-1e6f64..1e6, -1.0f64..1.0, Just(0.0)], 12),
        comment in "[a-z=]{0,12}",
    ) {
        let rows = Registry::new(["r one", "r2", "r3"]).unwrap();
        let cols = Registry::new(["a", "b", "c", "d"]).unwrap();
        let t = Table::new(rows, cols, Array2::from_shape_vec((3, 4), vals).unwrap()).unwrap();
        let text = format_table(&t, std::slice::from_ref(&comment));
        let (back, comments) = parse_table(&text, "round trip").unwrap();
        prop_assert_eq!(back.rows(), t.rows());
        prop_assert_eq!(back.cols(), t.cols());
        prop_assert_eq!(&comments, &vec![comment]);
        for (a, b) in t.values().iter().zip(back.values().iter()) {
            // 9 significant digits
            prop_assert!((a - b).abs() <= 5e-9 * a.abs().max(1e-300) + 1e-300, "{} vs {}", a, b);
        }
        // a second pass is exact
        prop_assert_eq!(format_table(&back, &comments), text);
    }
}
