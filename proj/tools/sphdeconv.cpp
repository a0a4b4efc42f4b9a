#include "sphdeconv/cli.hpp"

int main(int argc, char** argv) { return sphdeconv::cli::run(argc, argv); }
