#include <iostream>

#include "defect_forge/cli.hpp"

int main(int argc, char** argv) { return defect_forge::run_cli(argc, argv, std::cout, std::cerr); }
