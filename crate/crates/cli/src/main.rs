fn main() {
    std::process::exit(clockspin_cli::main_entry(std::env::args_os()));
}
