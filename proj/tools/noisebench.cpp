#include "noisebench/harness.hpp"

int main(int argc, char** argv) { return noisebench::cli(argc, argv); }
