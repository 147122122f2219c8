#include "topolab/harness/cli.hpp"

int main(int argc, char** argv) { return topolab::harness::cli_dispatch(argc, argv); }
