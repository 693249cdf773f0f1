fn main() {
    std::process::exit(noma_offload::cli::run(std::env::args_os()));
}
