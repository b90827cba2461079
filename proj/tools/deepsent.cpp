#include "deepsent/cli.hpp"

int main(int argc, char** argv) { return deepsent::run_cli(argc, argv); }
