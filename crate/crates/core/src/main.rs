fn main() { std::process::exit(mvcalib::cli::run(std::env::args())) }
