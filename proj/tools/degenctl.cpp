#include "degen/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return degen::run_cli(argc, argv, std::cout, std::cerr);
}
