use pbrs::linalg::{systematize, vandermonde, GeneratorMatrix, Matrix};
use pbrs::{Error, Gf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> Matrix {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    Matrix::from_hex_lines(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn power_form_matches_golden_files() {
    for (k, r) in [(2, 2), (10, 4)] {
        let g = GeneratorMatrix::for_code(k, r).unwrap();
        assert_eq!(g.matrix(), &fixture(&format!("generator_power_{k}_{r}.hex")));
        assert_eq!(g, GeneratorMatrix::power_form(k, r).unwrap());
    }
}

#[test]
fn systematized_vandermonde_matches_golden_files() {
    for (k, r) in [(2, 2), (10, 4)] {
        let g = GeneratorMatrix::systematic_vandermonde(k, r).unwrap();
        assert_eq!(g.matrix(), &fixture(&format!("generator_vandermonde_{k}_{r}.hex")));
        let points: Vec<Gf> = (0..(k + r) as u8).map(Gf).collect();
        let direct = systematize(&vandermonde(&points, k).unwrap()).unwrap();
        assert_eq!(direct, g);
    }
}

#[test]
fn hex_round_trip_and_errors() {
    let m = fixture("generator_power_10_4.hex");
    assert_eq!(Matrix::from_hex_lines(&m.to_hex_lines()).unwrap(), m);
    assert!(matches!(
        Matrix::from_hex_lines("01 02\n0g 00\n"),
        Err(Error::Parse { line: 2, .. })
    ));
}

#[test]
fn every_ten_of_fourteen_rows_invert() {
    for g in [
        GeneratorMatrix::for_code(10, 4).unwrap(),
        GeneratorMatrix::systematic_vandermonde(10, 4).unwrap(),
    ] {
        let mut checked = 0;
        for mask in 0u32..1 << 14 {
            if mask.count_ones() != 10 {
                continue;
            }
            let rows: Vec<usize> = (0..14).filter(|i| mask >> i & 1 == 1).collect();
            let sub = g.matrix().select_rows(&rows);
            let inv = sub.invert().unwrap();
            assert!(sub.mul(&inv).unwrap().is_identity());
            checked += 1;
        }
        assert_eq!(checked, 1001);
        assert!(g.non_invertible_subsets().is_empty());
        assert!(g.is_mds());
    }
}

#[test]
fn double_inverse_is_identity_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut done = 0;
    while done < 500 {
        let n = rng.gen_range(1..=12);
        let rows: Vec<Vec<u8>> = (0..n).map(|_| (0..n).map(|_| rng.gen()).collect()).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let Ok(inv) = m.invert() else {
            continue;
        };
        assert_eq!(inv.invert().unwrap(), m);
        assert!(m.mul(&inv).unwrap().is_identity());
        done += 1;
    }
}

#[test]
fn singular_matrices_are_reported() {
    let m = Matrix::from_rows(&[[1u8, 2], [2, 4]]).unwrap();
    assert!(matches!(m.invert(), Err(Error::SingularMatrix)));
    assert!(!m.is_invertible());
}

#[test]
fn vandermonde_rejects_bad_points() {
    assert!(matches!(
        vandermonde(&[Gf(3), Gf(3)], 2),
        Err(Error::DuplicateEvaluationPoint(3))
    ));
    let many: Vec<Gf> = (0..257).map(|i| Gf(i as u8)).collect();
    assert!(matches!(vandermonde(&many, 2), Err(Error::TooManyPoints(257))));
}
