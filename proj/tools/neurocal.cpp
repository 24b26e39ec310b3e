#include "neurocal/cli/app.hpp"

int main(int argc, char** argv) { return neurocal::cli::run(argc, argv); }
