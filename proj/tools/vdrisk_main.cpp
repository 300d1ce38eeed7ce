#include "vdrisk/cli.hpp"

int main(int argc, char** argv) { return vdrisk::cli::run(argc, argv); }
