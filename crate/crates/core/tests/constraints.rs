use diffcon::catalog::Catalog;
use diffcon::lde::{build_residual_diffusion, check_identity, fit_b_coefficients, FitConfig};
use diffcon::sampling::SampleConfig;

#[test]
fn every_entry_passes_with_fitted_coefficients() {
    let catalog = Catalog::builtin();
    for entry in catalog.list_constraints() {
        for i in 0..3 {
            let params = entry.draw_params(11, i).unwrap();
            let inst = entry.instantiate(&params).unwrap();
            let h = inst.verified_h();
            let fit = fit_b_coefficients(h, inst.q, &inst.f, &FitConfig::with_seed(i as u64)).unwrap();
            let r = build_residual_diffusion(h, inst.q, &inst.f, fit.b).unwrap();
            let rep = check_identity(&r, &SampleConfig::new(100 + i as u64, 100, 1e-8)).unwrap();
            assert!(rep.pass, "{} draw {i}: {rep:?}", entry.id);
        }
    }
}

#[test]
fn printed_errata_fail() {
    let catalog = Catalog::builtin();
    for id in ["so-3", "so-5"] {
        let entry = catalog.constraint(id).unwrap();
        for i in 0..3 {
            let inst = entry.instantiate(&entry.draw_params(11, i).unwrap()).unwrap();
            let fit = fit_b_coefficients(&inst.h, inst.q, &inst.f, &FitConfig::with_seed(3)).unwrap();
            let r = build_residual_diffusion(&inst.h, inst.q, &inst.f, fit.b).unwrap();
            let rep = check_identity(&r, &SampleConfig::new(5, 100, 1e-8)).unwrap();
            assert!(rep.max_abs > 1e-3, "{id}: {rep:?}");
        }
    }
}
