use diffcon::catalog::Catalog;
use diffcon::pde::compat_drift;

#[test]
fn catalog_compat_cases() {
    let cat = Catalog::builtin();
    let mut passing = 0;
    for spec in cat.list_compat() {
        let rep = compat_drift(spec).unwrap();
        println!(
            "{:16} initial {:.3e} max {:.3e} threshold {:.3e} pass {}",
            spec.id,
            rep.initial,
            rep.max_norm(),
            rep.threshold,
            rep.pass
        );
        assert_eq!(rep.pass, spec.expect_pass, "{}", spec.id);
        passing += rep.pass as usize;
    }
    assert!(passing >= 3);
}
