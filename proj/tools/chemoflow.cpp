#include "chemoflow/cli.hpp"

int main(int argc, char** argv) { return chemoflow::cli_main(argc, argv); }
