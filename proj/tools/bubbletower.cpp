#include "bubbletower/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return bt::cli_main(argc, argv, std::cout, std::cerr); }
