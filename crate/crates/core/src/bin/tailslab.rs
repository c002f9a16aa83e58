fn main() -> std::process::ExitCode {
    tailslab::cli::main()
}
