use pomdp_aa_demo::Session;

const TIGER: &str = include_str!("../../../models/tiger.pomdp");

#[test]
fn compare_then_query() {
    let mut s = Session::new(TIGER).unwrap();
    assert_eq!(s.states().len(), 2);
    let c = s.compare("sqmdp", 1.0, 1e-6, 10_000).unwrap();
    assert!(c.converged());
    assert!(c.aa_iterations() < c.fpi_iterations());
    assert!(c.aa_accepted() <= c.aa_iterations());
    assert_eq!(c.fpi_residuals().len(), c.fpi_iterations() + 1);
    assert!(*c.aa_residuals().last().unwrap() < 1e-6);

    let b = s.initial_belief();
    let listen = s.actions().iter().position(|a| a == "listen").unwrap();
    assert_eq!(s.best_action(b.clone()).unwrap(), listen);
    assert!(s.value(b.clone()).unwrap().is_finite());
    let post = s.update(b, listen, 0).unwrap();
    assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((post[0] - 0.85).abs() < 1e-12);
}

#[test]
fn errors_are_reported_as_messages() {
    assert!(Session::new("discount: 0.9\nstates: 2\n").is_err());
    let mut s = Session::new(TIGER).unwrap();
    assert!(s.best_action(vec![0.5, 0.5]).is_err());
    assert!(s.compare("nope", 1.0, 1e-6, 100).is_err());
    s.compare("qmdp", 1.0, 1e-6, 10_000).unwrap();
    assert!(s.value(vec![1.0]).is_err());
    assert!(s.update(vec![0.5, 0.5], 9, 0).is_err());
}
