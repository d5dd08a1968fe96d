fn main() {
    // Command-line entry point; wired up in the library's cli module.
    daan::cli::main()
}
