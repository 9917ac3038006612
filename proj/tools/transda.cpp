#include <iostream>

#include "transda/cli.hpp"

int main(int argc, char** argv) { return transda::cli::run(argc, argv, std::cout, std::cerr); }
