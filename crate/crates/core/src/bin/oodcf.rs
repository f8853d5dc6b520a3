fn main() {
    std::process::exit(oodcf::cli::main_from_env());
}
