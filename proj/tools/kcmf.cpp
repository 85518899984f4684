#include <iostream>

#include "kcmf/cli.hpp"

int main(int argc, char** argv) { return kcmf::cli::run(argc, argv, std::cout, std::cerr); }
