#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mkgc/errors.hpp"

namespace mkgc {

// H x W x C image, 64-bit in memory (the on-disk format is 32-bit).
struct ImageTensor {
    std::size_t h = 0, w = 0, c = 0;
    std::vector<double> data; // (h, w, c) row-major

    ImageTensor() = default;
    ImageTensor(std::size_t h_, std::size_t w_, std::size_t c_, double fill = 0.0)
        : h(h_), w(w_), c(c_), data(h_ * w_ * c_, fill) {}

    double& at(std::size_t i, std::size_t j, std::size_t k) { return data[(i * w + j) * c + k]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const { return data[(i * w + j) * c + k]; }
    std::size_t size() const { return h * w * c; }
};

void save_image_tensor(const ImageTensor& img, const std::string& path);
ImageTensor load_image_tensor(const std::string& path);

} // namespace mkgc
