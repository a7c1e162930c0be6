#include <iostream>

#include "inceptive/cli.hpp"

int main(int argc, char** argv) { return inceptive::run_cli(argc, argv, std::cout, std::cerr); }
