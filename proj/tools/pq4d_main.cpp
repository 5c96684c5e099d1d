#include "pq4d/cli.hpp"

int main(int argc, char** argv) { return pq::cli_main(argc, argv); }
