fn main() {
    std::process::exit(emblens::run(std::env::args_os()));
}
