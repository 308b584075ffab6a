#include <iostream>

#include "turbohoi/cli.hpp"

int main(int argc, char** argv) { return turbohoi::cli::run(argc, argv, std::cout, std::cerr); }
