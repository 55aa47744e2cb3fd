#include "pirf/cli.hpp"

int main(int argc, char** argv) { return pirf::cli_main(argc, argv); }
