#include "c3dm/cli.hpp"

int main(int argc, char** argv) { return c3dm::run_cli(argc, argv); }
