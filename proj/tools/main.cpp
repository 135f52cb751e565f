#include <iostream>

#include "advbench/cli.hpp"

int main(int argc, char** argv) { return advbench::cli::dispatch(argc, argv, std::cout, std::cerr); }
