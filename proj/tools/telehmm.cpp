#include <iostream>

#include "telehmm/cli.hpp"

int main(int argc, char** argv) { return telehmm::run_cli(argc, argv, std::cout, std::cerr); }
