use std::fs;
use std::path::Path;

use nschannel::config::parse_config;

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg =
            parse_config(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = parse_config(&cfg.canonical()).unwrap();
        assert_eq!(again, cfg);
        n += 1;
    }
    assert!(n >= 2);
}
