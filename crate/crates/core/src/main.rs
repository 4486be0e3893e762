fn main() -> std::process::ExitCode {
    p300bench::cli::main()
}
