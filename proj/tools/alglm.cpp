#include "alglm/cli.hpp"

int main(int argc, char** argv) { return alglm::run_cli(argc, argv); }
