#include "rlvr/cli.hpp"

int main(int argc, char** argv) { return rlvr::cli::dispatch(argc, argv); }
