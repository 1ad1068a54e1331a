#include "cli.hpp"

int main(int argc, char** argv) { return mancap::cli::run_cli(argc, argv); }
