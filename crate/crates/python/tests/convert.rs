use hdinfer::pipeline::LambdaPolicy;
use hdinfer_py::{matrix_from_rows, parse_policy, rows_from_matrix};

#[test]
fn rows_round_trip() {
    let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
    let m = matrix_from_rows(&rows).unwrap();
    assert_eq!(m.dim(), (2, 3));
    assert_eq!(m[[1, 0]], 4.0);
    assert_eq!(rows_from_matrix(&m), rows);
}

#[test]
fn ragged_and_empty_rows_are_rejected() {
    let err = matrix_from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
    assert!(err.to_string().contains("row 1 has 1 entries"), "{err}");
    assert!(matrix_from_rows(&[]).is_err());
    assert!(matrix_from_rows(&[vec![]]).is_err());
}

#[test]
fn policies_parse() {
    assert_eq!(parse_policy("scaled").unwrap(), LambdaPolicy::Scaled);
    assert_eq!(parse_policy("0.1").unwrap(), LambdaPolicy::Fixed(0.1));
    assert!(parse_policy("0").is_err());
}
