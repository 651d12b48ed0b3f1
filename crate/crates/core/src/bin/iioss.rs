fn main() { std::process::exit(iioss::cli::run(std::env::args_os())); }
