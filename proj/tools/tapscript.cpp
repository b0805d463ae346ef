#include <iostream>

#include <tapscript/cli.hpp>

int main(int argc, char** argv) { return tapscript::run_cli(argc, argv, std::cout, std::cerr); }
