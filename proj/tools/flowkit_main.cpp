#include "flowkit/harness.hpp"

int main(int argc, char** argv) { return flowkit::harness::cli_main(argc, argv); }
