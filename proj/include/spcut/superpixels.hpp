#pragma once

#include <array>
#include <vector>

#include "spcut/image.hpp"

namespace spcut {

struct RegionStats {
    std::vector<long long> sizes;               // pixel counts, sum to N
    std::vector<std::array<double, 2>> centers; // (row, col) centroids
    std::vector<std::array<double, 3>> mean_colors;
};

/// SLIC superpixels: grid-seeded local k-means in CIELab (D65, sRGB gamma)
/// with spatial term (d_xy / S)^2 * compactness^2, search window 2S x 2S,
/// followed by connectivity enforcement that merges components smaller than
/// S^2/4 into their largest adjacent region. Output labels are compact and
/// every region is 4-connected.
LabelMap slic_segment(const Image& img, int m_target, double compactness = 10.0,
                      int iterations = 10);

RegionStats region_stats(const Image& img, const LabelMap& map);

/// True when every label's pixels form a single 4-connected component.
bool all_regions_connected(const LabelMap& map);

} // namespace spcut
