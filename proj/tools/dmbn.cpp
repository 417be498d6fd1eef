#include "dmbn/cli/app.hpp"

int main(int argc, char** argv) { return dmbn::cli::run(argc, argv); }
