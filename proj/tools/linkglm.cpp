#include "linkglm/cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return linkglm::cli::run_cli(argc, argv, std::cout, std::cerr);
}
