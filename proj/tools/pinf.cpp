#include <iostream>

#include "pinf/app.hpp"

int main(int argc, char** argv) { return pinf::run_cli(argc, argv, std::cout, std::cerr); }
