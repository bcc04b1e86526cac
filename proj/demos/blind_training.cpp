// Trains the classifier twice for two epochs: once in the clear and once with every circuit
// evaluated by a server that only sees encrypted states. The two loss curves should coincide.
#include <cstdio>

#include "dvqa/cli.hpp"

int main() {
    using namespace dvqa;
    const LabeledDataset data = load_digits_csv(DVQA_DATA_DIR "/digits.csv");

    RunManifest m;
    m.seed = 3;
    m.epochs = 2;
    m.mode = Mode::plaintext;
    const auto plain = run_training(m, data).result.metrics;
    m.mode = Mode::delegated_exact;
    const TrainArtifacts blind = run_training(m, data);

    std::printf("%5s %12s %12s %10s\n", "epoch", "loss", "blind loss", "test acc");
    for (std::size_t i = 0; i < plain.size(); ++i)
        std::printf("%5zu %12.8f %12.8f %10.4f\n", plain[i].epoch, plain[i].loss, blind.result.metrics[i].loss, blind.result.metrics[i].test_acc);
    std::printf("server holds the final parameters: %s\n", blind.server_params ? "yes" : "no");
}
