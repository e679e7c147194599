#include "amjl/cli.hpp"

int main(int argc, char** argv) { return amjl::cli_main(argc, argv); }
