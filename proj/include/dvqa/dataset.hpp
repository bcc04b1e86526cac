#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvqa/simulator.hpp"

namespace dvqa {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Sample {
    std::vector<double> x;
    int label = 0;
};

struct LabeledDataset {
    std::vector<Sample> samples;
    std::size_t n = 0;  // encoding width in qubits

    std::size_t size() const { return samples.size(); }

    void validate() const {
        if (n < 2 || n > max_qubits) throw DatasetError("encoding width must be in 2..24");
        for (const auto& s : samples) {
            if (s.x.size() > (std::size_t{1} << n)) throw DatasetError("sample longer than the register");
            if (s.label != 0 && s.label != 1) throw DatasetError("labels must be 0 or 1");
            double nrm = 0;
            for (double v : s.x) {
                if (v < 0 || !std::isfinite(v)) throw DatasetError("features must be finite and nonnegative");
                nrm += v * v;
            }
            if (nrm == 0) throw DatasetError("zero-norm sample");
        }
    }
};

/// Keeps rows whose label is one of `classes`; classes[0] becomes label 0 and classes[1] label 1.
/// Zero-norm images cannot be amplitude encoded and are dropped.
inline LabeledDataset binary_subset(const std::vector<std::pair<std::vector<double>, int>>& rows, std::array<int, 2> classes, std::size_t n) {
    LabeledDataset d;
    d.n = n;
    for (const auto& [x, y] : rows) {
        if (y != classes[0] && y != classes[1]) continue;
        if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0; })) continue;
        d.samples.push_back({x, y == classes[0] ? 0 : 1});
    }
    d.validate();
    return d;
}

/// One image per line: 64 integers 0..16, then the digit label.
inline LabeledDataset load_digits_csv(const std::string& path, std::array<int, 2> classes = {0, 1}, std::size_t n = 6) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open dataset " + path);
    std::vector<std::pair<std::vector<double>, int>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::vector<int> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                vals.push_back(std::stoi(cell, &used));
                if (used != cell.size() && cell.find_first_not_of(" \r", used) != std::string::npos) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw DatasetError(path + ":" + std::to_string(lineno) + ": not an integer: " + cell);
            }
        }
        if (vals.size() != 65) throw DatasetError(path + ":" + std::to_string(lineno) + ": expected 64 pixels and a label");
        std::vector<double> x(vals.begin(), vals.begin() + 64);
        for (double v : x)
            if (v < 0 || v > 16) throw DatasetError(path + ":" + std::to_string(lineno) + ": pixel outside 0..16");
        rows.emplace_back(std::move(x), vals.back());
    }
    return binary_subset(rows, classes, n);
}

namespace detail {

inline std::uint32_t read_be32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw DatasetError("truncated IDX header");
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

}  // namespace detail

/// IDX image/label pair (MNIST layout). 28x28 images become 784 amplitudes, zero-padded to the register.
inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path, std::array<int, 2> classes = {0, 1},
                               std::size_t n = 10, std::size_t limit = 0) {
    std::ifstream im(images_path, std::ios::binary), lb(labels_path, std::ios::binary);
    if (!im) throw DatasetError("cannot open " + images_path);
    if (!lb) throw DatasetError("cannot open " + labels_path);
    if (detail::read_be32(im) != 0x00000803) throw DatasetError("bad IDX image magic");
    if (detail::read_be32(lb) != 0x00000801) throw DatasetError("bad IDX label magic");
    const std::uint32_t count = detail::read_be32(im), rows = detail::read_be32(im), cols = detail::read_be32(im);
    if (detail::read_be32(lb) != count) throw DatasetError("image and label counts differ");
    const std::size_t pixels = std::size_t{rows} * cols;
    if (pixels > (std::size_t{1} << n)) throw DatasetError("images do not fit the register");
    std::vector<std::pair<std::vector<double>, int>> out;
    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!im.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels))) throw DatasetError("truncated IDX images");
        char label = 0;
        if (!lb.read(&label, 1)) throw DatasetError("truncated IDX labels");
        const int y = static_cast<unsigned char>(label);
        if (y != classes[0] && y != classes[1]) continue;
        out.emplace_back(std::vector<double>(buf.begin(), buf.end()), y);
        if (limit && out.size() >= limit) break;
    }
    return binary_subset(out, classes, n);
}

struct Split {
    LabeledDataset train;
    LabeledDataset test;
};

/// Seeded shuffle, then the first (1 - test_fraction) share trains.
inline Split train_test_split(const LabeledDataset& d, double test_fraction, Rng& rng) {
    if (test_fraction < 0 || test_fraction >= 1) throw std::invalid_argument("test fraction must be in [0, 1)");
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::round(test_fraction * static_cast<double>(d.size())));
    Split s;
    s.train.n = s.test.n = d.n;
    for (std::size_t i = 0; i < idx.size(); ++i) (i < idx.size() - n_test ? s.train : s.test).samples.push_back(d.samples[idx[i]]);
    return s;
}

}  // namespace dvqa
