#include "geodet/cli.hpp"

int main(int argc, char** argv) { return geodet::cli::run(argc, argv); }
