#include "vmem/cli.hpp"

int main(int argc, char** argv) { return vmem::cli::run(argc, argv); }
