fn main() -> std::process::ExitCode {
    regen_lab::cli::main()
}
