fn main() {
    std::process::exit(ldpc_scaling::cli::main_entry());
}
