#include <iostream>

#include "hart/cli/app.hpp"

int main(int argc, char** argv) { return hart::cli::run(argc, argv, std::cout, std::cerr); }
