fn main() {
    std::process::exit(ss_yield::run(std::env::args_os()));
}
