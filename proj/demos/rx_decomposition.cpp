// Synthesises RX(5.57) over {H, T, T^dagger} and shows how the distance shrinks with recursion depth.
#include <cstdio>
#include <iostream>

#include "dvqa/reports.hpp"

int main() {
    using namespace dvqa;
    const EpsilonNet net = EpsilonNet::build(12);
    std::cout << format_decomposition(decompose_rotation('X', 5.57, 1e-2, net)) << "\n";

    const Mat2 target = single_qubit_matrix(GateKind::RX, 5.57);
    std::printf("%5s %8s %12s\n", "depth", "gates", "distance");
    for (std::size_t d = 0; d <= 3; ++d) {
        const GateSequence s = sk_decompose(target, d, net);
        std::printf("%5zu %8zu %12.3e\n", d, s.size(), trace_distance(target, s.unitary()));
    }
}
