#include "cli.hpp"

int main(int argc, char** argv) { return contagion::cli::run(argc, argv); }
