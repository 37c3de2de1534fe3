#include "cli.hpp"

int main(int argc, char** argv) { return sprig::cli::run(argc, argv); }
