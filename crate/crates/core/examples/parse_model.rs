//! Parse a model, inspect its symbolic derivatives and evaluate the right-hand side.
//!
//! ```text
//! cargo run --example parse_model
//! ```

use odesel::dsl::{differentiate, parse_model, Var};

const SOURCE: &str = "
# predator-prey with a logistic prey term
name: logistic_prey
states: x1, x2
params: psi1, psi2, psi3, psi4, psi5
init: x1 = 1, x2 = 2, psi1 = 1, psi2 = 1, psi3 = 1, psi4 = 1, psi5 = 0.1
x1' = psi2 * psi3 * x1 * x2 - psi4 * x1
x2' = psi1 * x2 - psi5 * x2^2 - psi2 * x1 * x2
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = parse_model(SOURCE)?;
    let states = model.state_names();
    let params = model.param_names();
    println!("{}: {} states, {} parameters", model.name(), model.dim(), model.n_params());

    for j in 0..model.dim() {
        println!("\nd{}/dt = {}", states[j], model.rhs()[j].render(states, params));
        for k in 0..model.dim() {
            let e = model.rhs_partial_state(j, k);
            println!("  d/d{:<5} {}", states[k], e.render(states, params));
        }
        for a in 0..model.n_params() {
            let e = model.rhs_partial_param(j, a);
            if e.as_const() != Some(0.0) {
                println!("  d/d{:<5} {}", params[a], e.render(states, params));
            }
        }
    }

    // second derivatives come from differentiating twice
    let d2 = differentiate(&differentiate(&model.rhs()[1], Var::State(1)), Var::Param(4));
    println!("\nd2 x2'/dx2 dpsi5 = {}", d2.render(states, params));

    let eta = model.initial_eta().expect("init header covers every name");
    let (x, psi) = eta.split_at(model.dim());
    let mut f = vec![0.0; model.dim()];
    model.eval_rhs(x, psi, 0.0, &mut f);
    println!("F at the initial guess: {f:?}");

    // fixing a parameter substitutes it and drops it from the parameter list
    let lv = model.with_fixed_params(&[("psi5", 0.0)])?;
    println!("\nwith psi5 = 0:\n{}", lv.render());
    Ok(())
}
