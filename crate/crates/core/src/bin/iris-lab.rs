fn main() {
    std::process::exit(iris_lab::cli::run(std::env::args_os()));
}
