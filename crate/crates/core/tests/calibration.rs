use std::f64::consts::PI;
use std::fs;

use nschannel::cli_io::{cmd_calibrate, ConstantsFile};
use nschannel::inequalities::{EnsembleSpec, Suite};

fn poincare_spec() -> EnsembleSpec {
    EnsembleSpec {
        seed: 1,
        count: 200,
        decay: 10.0,
        ..EnsembleSpec::default()
    }
}

#[test]
fn poincare_calibration_approaches_eigenvalue() {
    let tmp = tempfile::tempdir().unwrap();
    let (file, path) = cmd_calibrate(Suite::Poincare, &poincare_spec(), tmp.path()).unwrap();
    let c = file.constants.iter().find(|c| c.id == "poincare_gradient").unwrap();
    assert!(c.constant >= PI / 2.0 * (1.0 - 1e-10), "{}", c.constant);
    assert!(c.constant <= 1.01 * PI / 2.0, "{}", c.constant);
    assert_eq!(ConstantsFile::read(&path).unwrap(), file);
}

#[test]
fn fixed_seed_gives_identical_constants_file() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = EnsembleSpec {
        seed: 4,
        count: 100,
        ..EnsembleSpec::default()
    };
    let (_, a) = cmd_calibrate(Suite::Lemma1, &spec, &tmp.path().join("a")).unwrap();
    let (_, b) = cmd_calibrate(Suite::Lemma1, &spec, &tmp.path().join("b")).unwrap();
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn small_ensembles_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = EnsembleSpec {
        count: 99,
        ..EnsembleSpec::default()
    };
    assert!(cmd_calibrate(Suite::Gn2d, &spec, tmp.path()).is_err());
    assert!(cmd_calibrate(Suite::Ibp, &poincare_spec(), tmp.path()).is_err());
}
