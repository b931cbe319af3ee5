fn main() {
    std::process::exit(pnp_mdiqkd::cli::run(std::env::args_os()));
}
