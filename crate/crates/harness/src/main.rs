fn main() {
    std::process::exit(tdma_sync_harness::cli::main_with_args(std::env::args_os()));
}
