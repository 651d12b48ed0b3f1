//! Drive the command-line front end in-process, as the `iioss` binary does.
//!
//! cargo run --example cli -- check-ct --builtin scalar_linear --cert cert.json

fn main() {
    let mut args: Vec<String> = std::env::args().collect();
    if args.len() == 1 {
        args.extend(["builtins".to_string()]);
    }
    args[0] = "iioss".into();
    std::process::exit(iioss::cli::run(args));
}
