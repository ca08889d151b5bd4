#include "intentkit/cli.hpp"

int main(int argc, char** argv) { return intentkit::run_cli(argc, argv); }
