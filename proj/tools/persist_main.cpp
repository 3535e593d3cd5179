#include "persist/cli.hpp"

int main(int argc, char** argv) { return persist::cli_main(argc, argv); }
