fn main() {
    std::process::exit(meanfield_lab::cli::run(std::env::args_os()));
}
