#include <iostream>

#include "terrain/cli.hpp"

int main(int argc, char **argv) { return terrain::cli::run(argc, argv, std::cout, std::cerr); }
