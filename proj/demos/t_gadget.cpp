// Evaluates one T gate on a padded qubit, first with the pad known to the evaluator,
// then blindly through a gadget, and compares both outcome histograms to cos^2(pi/8).
#include <cstdlib>
#include <iostream>

#include "dvqa/reports.hpp"

int main(int argc, char** argv) {
    const std::size_t shots = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 2048;
    const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 7;
    std::cout << dvqa::format_gadget_demo(dvqa::gadget_demo(shots, seed));
}
