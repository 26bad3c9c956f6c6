#include "cli.hpp"

int main(int argc, char** argv) { return siamnet::cli::run_cli(argc, argv); }
