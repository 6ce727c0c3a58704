fn main() -> std::process::ExitCode {
    slaen_sim::cli::main()
}
