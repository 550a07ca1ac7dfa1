#include "lineqcox/cli.hpp"

int main(int argc, char** argv) { return lineqcox::cli::run(std::vector<std::string>(argv + 1, argv + argc)); }
