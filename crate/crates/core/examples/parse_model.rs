//! Parse a model from text, evaluate it and its exact Jacobians at a point.

use iioss::model::parse_model;

const MODEL: &str = "\
# pendulum with viscous friction, angle measured
dims 2 1 0 1
f1 = x2
f2 = -sin(x1) - 0.3*x2 + u1
h1 = x1
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = parse_model(MODEL)?;
    let pe = sys.eval_point(&[0.4, -0.1], &[0.2], &[])?;
    println!("f(x,u) = {}", pe.f.transpose());
    println!("A = {}", pe.a);
    println!("B = {}", pe.b);
    println!("C = {}", pe.c);
    let deps: Vec<String> = sys.ct_jacobian_dependencies().iter().map(|v| v.to_string()).collect();
    println!("A and B vary with: {}", deps.join(", "));
    Ok(())
}
