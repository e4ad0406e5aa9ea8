#pragma once

// CSV output: comma separated, dot decimal, LF endings, 17 significant digits.

#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "entprune/numerics/errors.hpp"
#include "entprune/numerics/tensor.hpp"

namespace entprune::io {

inline void write_loss_trace(std::ostream& os, const std::vector<double>& loss, std::size_t step_offset = 0) {
    os << "step,loss\n";
    os.precision(17);
    for (std::size_t i = 0; i < loss.size(); ++i) os << step_offset + i << ',' << loss[i] << '\n';
}

inline void write_samples(std::ostream& os, const Tensor& x, const std::vector<std::size_t>& labels) {
    detail::require(x.rank() == 2 && labels.size() == x.rows(), "write_samples: one label per row");
    os << "label";
    for (std::size_t j = 0; j < x.cols(); ++j) os << ",x" << j;
    os << '\n';
    os.precision(17);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        os << labels[i];
        for (std::size_t j = 0; j < x.cols(); ++j) os << ',' << x(i, j);
        os << '\n';
    }
}

// Opens in binary mode so no platform newline translation happens.
inline std::ofstream open_output(const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw PreconditionError("cannot open output file: " + path);
    return f;
}

} // namespace entprune::io
