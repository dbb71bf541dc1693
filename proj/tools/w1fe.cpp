#include "w1fe/harness/cli.hpp"

int main(int argc, char** argv) { return w1fe::harness::cli_run(argc, argv); }
