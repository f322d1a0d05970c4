#include "spcut/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "spcut/errors.hpp"

namespace spcut {

namespace {

void check_same_dims(const LabelMap& a, const LabelMap& b, const char* what) {
    if (a.h != b.h || a.w != b.w)
        throw StructuralError(std::string(what) + ": label map dimensions differ");
}

long long pairs2(long long n) { return n * (n - 1) / 2; }

} // namespace

ConfusionTable confusion_table(const LabelMap& a, const LabelMap& b) {
    check_same_dims(a, b, "confusion_table");
    ConfusionTable t;
    t.m_a = a.regions;
    t.m_b = b.regions;
    t.n = a.pixels();
    t.counts.assign(static_cast<std::size_t>(t.m_a) * t.m_b, 0);
    t.row_totals.assign(static_cast<std::size_t>(t.m_a), 0);
    t.col_totals.assign(static_cast<std::size_t>(t.m_b), 0);
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        const int ra = a.labels[i], rb = b.labels[i];
        ++t.counts[static_cast<std::size_t>(ra) * t.m_b + rb];
        ++t.row_totals[static_cast<std::size_t>(ra)];
        ++t.col_totals[static_cast<std::size_t>(rb)];
    }
    return t;
}

double segmentation_covering(const LabelMap& seg, const LabelMap& gt) {
    const ConfusionTable t = confusion_table(seg, gt);
    double covering = 0.0;
    for (int j = 0; j < t.m_b; ++j) {
        double best = 0.0;
        for (int i = 0; i < t.m_a; ++i) {
            const long long inter = t.at(i, j);
            if (inter == 0) continue;
            const long long uni = t.row_totals[static_cast<std::size_t>(i)] +
                                  t.col_totals[static_cast<std::size_t>(j)] - inter;
            best = std::max(best, static_cast<double>(inter) / static_cast<double>(uni));
        }
        covering += static_cast<double>(t.col_totals[static_cast<std::size_t>(j)]) * best;
    }
    return covering / static_cast<double>(t.n);
}

double segmentation_covering(const LabelMap& seg, const std::vector<LabelMap>& gts) {
    if (gts.empty()) throw StructuralError("segmentation_covering: no ground truths");
    double s = 0.0;
    for (const LabelMap& gt : gts) s += segmentation_covering(seg, gt);
    return s / static_cast<double>(gts.size());
}

double probabilistic_rand_index(const LabelMap& seg, const std::vector<LabelMap>& gts) {
    if (gts.empty()) throw StructuralError("probabilistic_rand_index: no ground truths");
    double sum = 0.0;
    for (const LabelMap& gt : gts) {
        const ConfusionTable t = confusion_table(seg, gt);
        const long long total = pairs2(t.n);
        if (total == 0) {
            sum += 1.0;
            continue;
        }
        long long same_a = 0, same_b = 0, same_both = 0;
        for (long long r : t.row_totals) same_a += pairs2(r);
        for (long long c : t.col_totals) same_b += pairs2(c);
        for (long long v : t.counts) same_both += pairs2(v);
        const long long agreements = total - same_a - same_b + 2 * same_both;
        sum += static_cast<double>(agreements) / static_cast<double>(total);
    }
    return sum / static_cast<double>(gts.size());
}

double variation_of_information(const LabelMap& seg, const LabelMap& gt) {
    const ConfusionTable t = confusion_table(seg, gt);
    const double n = static_cast<double>(t.n);
    double h_a = 0.0, h_b = 0.0, mi = 0.0;
    for (long long r : t.row_totals)
        if (r > 0) {
            const double p = static_cast<double>(r) / n;
            h_a -= p * std::log(p);
        }
    for (long long c : t.col_totals)
        if (c > 0) {
            const double p = static_cast<double>(c) / n;
            h_b -= p * std::log(p);
        }
    for (int i = 0; i < t.m_a; ++i)
        for (int j = 0; j < t.m_b; ++j) {
            const long long v = t.at(i, j);
            if (v == 0) continue;
            const double p = static_cast<double>(v) / n;
            const double pa = static_cast<double>(t.row_totals[static_cast<std::size_t>(i)]) / n;
            const double pb = static_cast<double>(t.col_totals[static_cast<std::size_t>(j)]) / n;
            mi += p * std::log(p / (pa * pb));
        }
    return h_a + h_b - 2.0 * mi;
}

double variation_of_information(const LabelMap& seg, const std::vector<LabelMap>& gts) {
    if (gts.empty()) throw StructuralError("variation_of_information: no ground truths");
    double s = 0.0;
    for (const LabelMap& gt : gts) s += variation_of_information(seg, gt);
    return s / static_cast<double>(gts.size());
}

OdsOis ods_ois(const std::vector<std::vector<double>>& scores, bool higher_better) {
    if (scores.empty() || scores.front().empty())
        throw StructuralError("ods_ois: empty score matrix");
    const std::size_t n_params = scores.front().size();
    for (const auto& row : scores)
        if (row.size() != n_params) throw StructuralError("ods_ois: ragged score matrix");

    auto better = [higher_better](double a, double b) { return higher_better ? a > b : a < b; };

    OdsOis out;
    double best_mean = 0.0;
    for (std::size_t p = 0; p < n_params; ++p) {
        double mean = 0.0;
        for (const auto& row : scores) mean += row[p];
        mean /= static_cast<double>(scores.size());
        if (p == 0 || better(mean, best_mean)) {
            best_mean = mean;
            out.ods_param = static_cast<int>(p);
        }
    }
    out.ods = best_mean;

    double ois_sum = 0.0;
    for (const auto& row : scores) {
        double best = row[0];
        for (double v : row)
            if (better(v, best)) best = v;
        ois_sum += best;
    }
    out.ois = ois_sum / static_cast<double>(scores.size());
    return out;
}

} // namespace spcut
