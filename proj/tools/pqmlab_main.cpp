#include "pqmlab/cli.hpp"

int main(int argc, char** argv) { return pqm::run_cli(argc, argv); }
