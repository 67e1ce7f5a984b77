#include <iostream>

#include "modx/cli.hpp"

int main(int argc, char** argv) { return modx::parse_and_dispatch(argc, argv, std::cout, std::cerr); }
