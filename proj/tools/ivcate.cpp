#include "ivcate/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ivcate::run_cli(argc, argv, std::cout, std::cerr); }
