#include <iostream>

#include "bayescomplex/cli.hpp"

int main(int argc, char** argv) { return bayescomplex::cli::run_cli(argc, argv, std::cout, std::cerr); }
