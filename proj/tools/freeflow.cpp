#include "freeflow/cli.hpp"

int main(int argc, char** argv) { return freeflow::cli::main(argc, argv); }
