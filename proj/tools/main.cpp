#include "nucfactor/cli.hpp"

int main(int argc, char** argv) { return nucfactor::cli::main_entry(argc, argv); }
