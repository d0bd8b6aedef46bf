#include "dfrot/cli.hpp"

int main(int argc, char** argv) { return dfrot::cli_dispatch(argc, argv); }
