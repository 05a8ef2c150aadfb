#include "cvos/cli.hpp"

int main(int argc, char** argv) { return cvos::cli_dispatch(argc, argv); }
