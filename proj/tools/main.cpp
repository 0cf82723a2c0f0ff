#include "sparsegen/commands.hpp"

int main(int argc, char** argv) { return sparsegen::run_cli(argc, argv); }
