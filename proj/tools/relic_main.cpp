#include "relic/cli.hpp"

int main(int argc, char** argv) { return relic::cli::run(argc, argv); }
