#include <string>
#include <vector>

#include "sublora/cli.hpp"

int main(int argc, char** argv) {
    return sublora::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
