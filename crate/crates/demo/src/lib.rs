//! Browser demo. Load a `.pomdp` model, then:
//!
//! 1. solve it with FPI and with safeguarded AA and compare residual curves,
//! 2. ask the solved policy for the best action and value at a belief,
//! 3. step the belief forward with an action and an observation.
//!
//! Everything is plain Rust so the crate also builds and tests natively.

use pomdp_aa::accel::{solve, Mode, SolveError, SolveReport, SolverConfig};
use pomdp_aa::eval::{policy_action, value_estimate};
use pomdp_aa::model::{belief_update, Belief};
use pomdp_aa::parser::{parse_pomdp, PomdpSource};
use pomdp_aa::{AlphaMatrix, OperatorSpec, PomdpModel};
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub struct Session {
    model: PomdpModel,
    alpha: Option<AlphaMatrix>,
}

#[wasm_bindgen]
pub struct Comparison {
    fpi: SolveReport,
    aa: SolveReport,
}

#[wasm_bindgen]
impl Comparison {
    pub fn fpi_iterations(&self) -> usize {
        self.fpi.iterations
    }

    pub fn aa_iterations(&self) -> usize {
        self.aa.iterations
    }

    pub fn aa_accepted(&self) -> usize {
        self.aa.aa_accepted
    }

    /// `‖g^k‖_∞` for `k = 0..=iterations`.
    pub fn fpi_residuals(&self) -> Vec<f64> {
        with_initial(&self.fpi)
    }

    pub fn aa_residuals(&self) -> Vec<f64> {
        with_initial(&self.aa)
    }

    pub fn converged(&self) -> bool {
        self.fpi.converged && self.aa.converged
    }
}

fn with_initial(r: &SolveReport) -> Vec<f64> {
    std::iter::once(r.initial_residual)
        .chain(r.residual_history.iter().copied())
        .collect()
}

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new(text: &str) -> Result<Session, String> {
        let src = PomdpSource {
            text: text.to_string(),
            origin: "<input>".into(),
        };
        let model = parse_pomdp(&src).map_err(|e| e.to_string())?;
        Ok(Session { model, alpha: None })
    }

    pub fn states(&self) -> Vec<String> {
        self.model.states().to_vec()
    }

    pub fn actions(&self) -> Vec<String> {
        self.model.actions().to_vec()
    }

    pub fn observations(&self) -> Vec<String> {
        self.model.observations().to_vec()
    }

    pub fn initial_belief(&self) -> Vec<f64> {
        self.model.initial_belief().probs().to_vec()
    }

    /// Runs FPI and AA from the same start. The AA result is kept for
    /// belief queries.
    pub fn compare(
        &mut self,
        operator: &str,
        tau: f64,
        tolerance: f64,
        max_iter: usize,
    ) -> Result<Comparison, String> {
        let spec: OperatorSpec = operator
            .parse()
            .map_err(|e: pomdp_aa::operators::OperatorError| e.to_string())?;
        let config = SolverConfig {
            operator: OperatorSpec { tau, ..spec },
            tolerance,
            max_iter,
            ..SolverConfig::default()
        };
        let run = |mode| match solve(
            &self.model,
            &SolverConfig {
                mode,
                ..config.clone()
            },
        ) {
            Ok(r) => Ok(r),
            Err(SolveError::MaxIterationsExceeded(r)) => Ok(*r),
            Err(e) => Err(e.to_string()),
        };
        let fpi = run(Mode::Fpi)?;
        let aa = run(Mode::Aa)?;
        self.alpha = Some(aa.alpha_final.clone());
        Ok(Comparison { fpi, aa })
    }

    /// Index of the greedy action at `belief`.
    pub fn best_action(&self, belief: Vec<f64>) -> Result<usize, String> {
        let (alpha, b) = self.query(belief)?;
        Ok(policy_action(alpha, &b))
    }

    /// `max_a bᵀα_a` at `belief`.
    pub fn value(&self, belief: Vec<f64>) -> Result<f64, String> {
        let (alpha, b) = self.query(belief)?;
        Ok(value_estimate(alpha, &b))
    }

    pub fn update(
        &self,
        belief: Vec<f64>,
        action: usize,
        observation: usize,
    ) -> Result<Vec<f64>, String> {
        let b = Belief::new(belief).map_err(|e| e.to_string())?;
        belief_update(&self.model, &b, action, observation)
            .map(Belief::into_inner)
            .map_err(|e| e.to_string())
    }
}

impl Session {
    fn query(&self, belief: Vec<f64>) -> Result<(&AlphaMatrix, Belief), String> {
        let alpha = self.alpha.as_ref().ok_or("solve the model first")?;
        if belief.len() != self.model.n_states() {
            return Err(format!(
                "belief has {} entries, model has {} states",
                belief.len(),
                self.model.n_states()
            ));
        }
        Ok((alpha, Belief::new(belief).map_err(|e| e.to_string())?))
    }
}
