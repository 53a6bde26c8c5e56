// SPDX-License-Identifier: Apache-2.0

#include "ddr/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ddr::cli::run(argc, argv, std::cout, std::cerr); }
