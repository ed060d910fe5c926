use std::io::BufReader;

use bitb::io::{grid_from_json, grid_to_json, read_grid_csv, write_grid_csv, CoefficientsJson};
use bitb_core::accretive::AccretivePair;
use bitb_core::grid_function::{random_grid_function, Axis};
use bitb_core::martingale::{decompose, reconstruct};

fn mesh() -> [Axis; 2] {
    [Axis::new(3, 1).unwrap(), Axis::new(1, 2).unwrap()]
}

#[test]
fn grid_csv_round_trip_is_exact() {
    let f = random_grid_function(mesh(), 5);
    let mut buf = Vec::new();
    write_grid_csv(&f, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("# depths=3x1 dims=1x2\nc1,c2,re,im\n"), "{text}");
    let back = read_grid_csv(BufReader::new(&buf[..])).unwrap();
    assert_eq!(back, f);
}

#[test]
fn grid_csv_rejects_missing_and_stray_cells() {
    let f = random_grid_function([Axis::new(1, 1).unwrap(); 2], 1);
    let mut buf = Vec::new();
    write_grid_csv(&f, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let truncated: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
    assert!(read_grid_csv(truncated.as_bytes()).unwrap_err().to_string().contains("missing"));
    let stray = format!("{text}5,0,1.0,0.0\n");
    assert!(read_grid_csv(stray.as_bytes()).is_err());
    assert!(read_grid_csv("c1,c2,re,im\n".as_bytes()).is_err());
}

#[test]
fn grid_json_round_trip_is_exact() {
    let f = random_grid_function(mesh(), 8);
    assert_eq!(grid_from_json(&grid_to_json(&f).unwrap()).unwrap(), f);
    assert!(grid_from_json(r#"{"depths":[1,1],"dims":[1,1],"re":[0,0,0,0],"im":[0,0,0]}"#).is_err());
}

#[test]
fn coefficients_json_round_trip_reconstructs() {
    let axes = mesh();
    let pair = AccretivePair::random(axes, 3, 0.5, 2.0).unwrap();
    let f = random_grid_function(axes, 4);
    let coeffs = decompose(&f, &pair).unwrap();
    let text = serde_json::to_string(&CoefficientsJson::from(&coeffs)).unwrap();
    let back = serde_json::from_str::<CoefficientsJson>(&text).unwrap().to_coefficients().unwrap();
    assert_eq!(back, coeffs);
    assert!(reconstruct(&back).unwrap().max_abs_diff(&f).unwrap() < 1e-12);
}
