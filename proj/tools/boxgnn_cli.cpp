#include <iostream>

#include "boxgnn/cli.hpp"

int main(int argc, char** argv) { return boxgnn::cli::run_cli(argc, argv, std::cout, std::cerr); }
