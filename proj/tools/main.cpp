#include "lsem/cli.hpp"

int main(int argc, char** argv) { return lsem::cli::run(argc, argv); }
