#include "mbmon/cli.hpp"

int main(int argc, char** argv) { return mbmon::run_cli(argc, argv); }
