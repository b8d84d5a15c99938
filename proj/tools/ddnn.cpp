#include "ddnn/cli.hpp"

int main(int argc, char** argv) { return ddnn::run_cli(argc, argv); }
