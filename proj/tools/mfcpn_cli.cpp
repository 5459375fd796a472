#include "mfcpn/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return mfcpn::run_cli(args, std::cout, std::cerr);
}
