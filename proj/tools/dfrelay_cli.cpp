#include "dfrelay/cli.hpp"

int main(int argc, char** argv) { return dfr::cli::main(argc, argv); }
