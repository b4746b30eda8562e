#include "dmpad/cli/cli.hpp"

int main(int argc, char** argv) { return dmpad::cli::run(argc, argv); }
