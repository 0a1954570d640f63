use fesic::cse::{cse, has_unique_symvals};
use fesic::designs::corpus;
use fesic::difftest::{first_divergence, trial_state};
use fesic::verilog::{emit_verilog, lint};
use fesic::{compile, PassOptions};

#[test]
fn every_stage_is_well_formed_and_shrinks() {
    for d in corpus() {
        let p = d.build().unwrap();
        let c = compile(&p, PassOptions::default());
        c.ir.check_scoped().unwrap();
        let cse_out = c.cse.as_ref().unwrap();
        let bdd_out = c.bdd.as_ref().unwrap();
        for b in [&c.rtl, cse_out, bdd_out] {
            b.check(p.env()).unwrap_or_else(|e| panic!("{d}: {e}"));
        }
        let s = c.stats();
        assert!(s.cse.unwrap() <= s.rtl, "{d}: {s:?}");
        assert!(s.bdd.unwrap() <= s.cse.unwrap(), "{d}: {s:?}");
        assert_eq!(&cse(cse_out), cse_out, "{d}: cse not idempotent");
        assert!(has_unique_symvals(cse_out), "{d}");
        let text = emit_verilog(p.env(), bdd_out, "top").unwrap();
        lint(&text).unwrap_or_else(|e| panic!("{d}: {e}"));
    }
}

#[test]
fn random_states_agree_across_stages() {
    for d in corpus() {
        let p = d.build().unwrap();
        let c = compile(&p, PassOptions::default());
        for k in 0..200 {
            let s = trial_state(p.env(), 42, k);
            assert_eq!(first_divergence(&p, &c, &s), None, "{d}, trial {k}");
        }
    }
}

#[test]
fn counter_compiles_to_one_register_write() {
    let p = fesic::designs::counter_program(4);
    let c = compile(&p, PassOptions::default());
    for b in [&c.rtl, c.cse.as_ref().unwrap(), c.bdd.as_ref().unwrap()] {
        assert_eq!(b.effects.iter().flatten().count(), 1);
    }
    assert!(c.stats().bdd.unwrap() < c.stats().rtl);
}
