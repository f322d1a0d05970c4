#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "spcut/tensor.hpp"

namespace spcut {

/// H x W x C image with values in [0, 1], row-major (y, x, channel).
struct Image {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<double> v;

    Image() = default;
    Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(static_cast<std::size_t>(h_) * w_ * c_, 0.0) {}

    double& at(int y, int x, int ch) { return v[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return v[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
    long long pixels() const { return static_cast<long long>(h) * w; }
};

/// H x W map of region indices forming the compact range [0, regions).
struct LabelMap {
    int h = 0;
    int w = 0;
    int regions = 0;
    std::vector<int> labels;

    LabelMap() = default;
    LabelMap(int h_, int w_) : h(h_), w(w_), labels(static_cast<std::size_t>(h_) * w_, 0) {}

    int& at(int y, int x) { return labels[static_cast<std::size_t>(y) * w + x]; }
    int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * w + x]; }
    long long pixels() const { return static_cast<long long>(h) * w; }
};

/// Relabels to [0, M) in order of first appearance (row-major) and sets `regions`.
LabelMap compact_labels(const std::vector<long long>& raw, int h, int w);
void recompact(LabelMap& map);

// Image <-> tensor conversion; tensors are (1, C, H, W).
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t, int batch_index = 0);

// --- file I/O ------------------------------------------------------------

/// Reads a binary PPM (P6) or PGM (P5) as an image scaled to [0, 1].
Image read_image(const std::filesystem::path& path);

/// Writes an 8-bit binary PPM (P6); values are rounded from [0, 1].
void write_image_ppm(const std::filesystem::path& path, const Image& img);

/// Reads a label map from a binary PGM (P5, maxval up to 65535) or a CSV grid
/// of integers (extension .csv). Labels are compacted in order of first
/// appearance.
LabelMap read_label_map(const std::filesystem::path& path);

/// Writes a label map as 16-bit big-endian binary PGM (P5, maxval 65535).
void write_label_map(const std::filesystem::path& path, const LabelMap& map);

/// Copy of `img` with red pixels wherever a 4-neighbor carries another label.
Image overlay_boundaries(const Image& img, const LabelMap& map);

/// Writes bytes to a temp file in the target directory, then renames.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

// --- geometry helpers used by training augmentation -----------------------

Image crop(const Image& img, int y0, int x0, int ch, int cw);
Image flip_horizontal(const Image& img);
LabelMap crop(const LabelMap& map, int y0, int x0, int ch, int cw); // recompacted
LabelMap flip_horizontal(const LabelMap& map);

} // namespace spcut
