#include <iostream>

#include "imap/cli.hpp"

int main(int argc, char** argv) { return imap::cli::run(argc, argv, std::cout, std::cerr); }
