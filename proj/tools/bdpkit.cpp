#include <iostream>

#include "bdp/cli.hpp"

int main(int argc, char** argv) { return bdp::run(argc, argv, std::cout, std::cerr); }
