fn main() {
    std::process::exit(sgc_sim::cli::dispatch(std::env::args_os()));
}
