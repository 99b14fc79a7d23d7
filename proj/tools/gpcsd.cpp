#include "gpcsd/cli.hpp"

int main(int argc, char** argv) { return gpcsd::cli_main(argc, argv); }
