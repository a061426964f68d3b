#include <iostream>

#include "bae/cli.hpp"

int main(int argc, char** argv) { return bae::cli::run(argc, argv, std::cout, std::cerr); }
