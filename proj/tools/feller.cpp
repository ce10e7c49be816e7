#include "feller/cli.hpp"

int main(int argc, char** argv) { return feller::cli::run(argc, argv); }
