fn main() -> std::process::ExitCode {
    covalign::cli::main()
}
