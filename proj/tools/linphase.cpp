#include "linphase/cli.hpp"

int main(int argc, char** argv) { return linphase::cli::run(argc, argv); }
