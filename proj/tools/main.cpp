#include "curvebench/cli.hpp"

int main(int argc, char** argv) { return curvebench::run_cli(argc, argv); }
