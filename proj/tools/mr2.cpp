#include <iostream>

#include "mr2/cli.hpp"

int main(int argc, char** argv) { return mr2::cli::run(argc, argv, std::cout, std::cerr); }
