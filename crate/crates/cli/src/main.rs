fn main() {
    std::process::exit(psyman::run(std::env::args_os()));
}
