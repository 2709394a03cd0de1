fn main() -> std::process::ExitCode {
    inversive_flow::cli::main()
}
