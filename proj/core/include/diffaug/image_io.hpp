#pragma once

#include <filesystem>
#include <vector>

namespace diffaug {

// Row-major grayscale image with intensities in [0, 1].
struct Image {
    size_t height = 0;
    size_t width = 0;
    std::vector<double> pixels;

    double& at(size_t r, size_t c) { return pixels[r * width + c]; }
    double at(size_t r, size_t c) const { return pixels[r * width + c]; }
};

Image make_image(size_t height, size_t width, double fill = 0.0);

// Reads any PNG and converts to 8-bit grayscale. Color inputs are collapsed
// with the standard luma weights; alpha is dropped.
Image read_png_gray(const std::filesystem::path& path);

// Writes 8-bit grayscale. Values are clamped to [0, 1] before quantization,
// so a write/read round trip agrees to within one quantization step.
void write_png_gray(const std::filesystem::path& path, const Image& img);

}  // namespace diffaug
