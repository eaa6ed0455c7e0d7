#include "uista/cli.hpp"

int main(int argc, char** argv) { return uista::run_cli(argc, argv); }
