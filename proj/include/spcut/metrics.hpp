#pragma once

#include <vector>

#include "spcut/image.hpp"

namespace spcut {

/// Pixel-overlap counts between two labelings of the same image.
struct ConfusionTable {
    int m_a = 0, m_b = 0;
    long long n = 0;
    std::vector<long long> counts;     // m_a x m_b, row-major
    std::vector<long long> row_totals; // per a-region
    std::vector<long long> col_totals; // per b-region

    long long at(int i, int j) const { return counts[static_cast<std::size_t>(i) * m_b + j]; }
};

ConfusionTable confusion_table(const LabelMap& a, const LabelMap& b);

/// Size-weighted best-Jaccard covering of ground-truth regions by
/// segmentation regions; in [0, 1], 1 iff the partitions coincide.
double segmentation_covering(const LabelMap& seg, const LabelMap& gt);
double segmentation_covering(const LabelMap& seg, const std::vector<LabelMap>& gts);

/// Fraction of pixel pairs whose same/different-region relation agrees,
/// averaged over the ground truths.
double probabilistic_rand_index(const LabelMap& seg, const std::vector<LabelMap>& gts);

/// H(seg) + H(gt) - 2 I(seg; gt) in nats; 0 iff the partitions coincide.
double variation_of_information(const LabelMap& seg, const LabelMap& gt);
double variation_of_information(const LabelMap& seg, const std::vector<LabelMap>& gts);

struct OdsOis {
    double ods = 0.0;
    int ods_param = 0;
    double ois = 0.0;
};

/// scores[image][parameter]; ODS picks the parameter with the best mean
/// (ties to the lowest index), OIS averages each image's best score.
OdsOis ods_ois(const std::vector<std::vector<double>>& scores, bool higher_better);

} // namespace spcut
