#include "trustkit/cli.hpp"

int main(int argc, char** argv) { return trustkit::cli::main_entry(argc, argv); }
