fn main() -> std::process::ExitCode {
    constrained_law::cli::main_entry()
}
