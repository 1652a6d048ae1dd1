// SPDX-License-Identifier: Apache-2.0
#include "tli/cli/cli.hpp"

int main(int argc, char** argv) { return tli::run_cli(argc, argv); }
