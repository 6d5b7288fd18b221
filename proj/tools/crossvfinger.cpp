#include "crossvfinger/cli.hpp"

int main(int argc, char** argv) { return cvf::cli::dispatch(argc, argv); }
