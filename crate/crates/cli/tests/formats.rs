use ndarray::Array2;
use proptest::prelude::*;

use g2node_cli::curves::CurveFile;
use g2node_cli::matrix::{Axis, Matrix};

fn matrix(rows: usize, cols: usize, data: Vec<f32>) -> Matrix {
    Matrix {
        name: "m".into(),
        row_axis: Axis::new("tau", "s", &[1e-7, 0.1], "log"),
        col_axis: Axis::new("t", "ps", &[0.0, 65.0], "linear"),
        units: "g2".into(),
        note: "some note".into(),
        values: Array2::from_shape_vec((rows, cols), data).unwrap(),
    }
}

proptest! {
    #[test]
    fn matrix_round_trip_is_bit_exact(
        (rows, cols, data) in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            (Just(r), Just(c), proptest::collection::vec(any::<u32>().prop_map(f32::from_bits), r * c))
        })
    ) {
        let m = matrix(rows, cols, data);
        let back = Matrix::decode(&m.encode()).unwrap();
        prop_assert_eq!(back.values.dim(), (rows, cols));
        prop_assert!(back.values.iter().zip(m.values.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(&back.row_axis, &m.row_axis);
        prop_assert_eq!(&back.note, &m.note);
    }

    #[test]
    fn curve_file_round_trip(
        t in proptest::collection::vec(0.0f64..10.0, 1..11),
        tau in proptest::collection::vec(1e-7f64..0.1, 1..8),
        seed in any::<u64>(),
    ) {
        let values: Vec<Vec<f64>> = (0..t.len())
            .map(|k| (0..tau.len()).map(|i| 0.5 + ((seed ^ (k * 31 + i) as u64) % 1000) as f64 / 1000.0).collect())
            .collect();
        let c = CurveFile { t, tau, values };
        prop_assert_eq!(CurveFile::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn bad_token_reports_its_row(row in 0usize..5, col in 0usize..3) {
        let mut lines = vec!["# header".to_string(), "1 2".to_string()];
        lines.extend((0..5).map(|i| format!("{i}e-6 1.0 0.9")));
        let target = 2 + row;
        let mut tokens: Vec<String> = lines[target].split(' ').map(str::to_string).collect();
        tokens[col] = "x1".into();
        lines[target] = tokens.join(" ");
        let err = CurveFile::parse(&lines.join("\n")).unwrap_err().to_string();
        prop_assert!(err.contains(&format!("row {}, column {}", target + 1, col + 1)), "{}", err);
    }
}

#[test]
fn truncated_matrix_is_rejected() {
    let bytes = matrix(2, 3, vec![0.5; 6]).encode();
    assert!(Matrix::decode(&bytes[..bytes.len() - 1]).is_err());
    assert!(Matrix::decode(b"G2MAT 1\nname x\n").is_err());
    assert!(Matrix::decode(b"P5\nend\n").is_err());
}

#[test]
fn curve_rows_need_every_column() {
    let err = CurveFile::parse("1 2\n1e-6 1.0\n").unwrap_err().to_string();
    assert!(err.contains("row 2"), "{err}");
    assert!(CurveFile::parse("# only a comment\n").is_err());
    assert!(CurveFile::parse("1 2\n").is_err());
}
