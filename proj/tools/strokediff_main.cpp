#include <iostream>

#include "strokediff/cli.hpp"

int main(int argc, char** argv) { return strokediff::run_cli(argc, argv, std::cout, std::cerr); }
