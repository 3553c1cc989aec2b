fn main() {
    std::process::exit(treeconv_cli::run(std::env::args_os()));
}
