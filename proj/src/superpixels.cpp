#include "spcut/superpixels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>

#include "spcut/errors.hpp"

namespace spcut {

namespace {

// sRGB [0,1] -> CIELab, D65 white point.
void rgb_to_lab(double r, double g, double b, double& L, double& A, double& B) {
    auto linearize = [](double c) {
        return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
    };
    const double rl = linearize(r), gl = linearize(g), bl = linearize(b);
    const double x = rl * 0.4124564 + gl * 0.3575761 + bl * 0.1804375;
    const double y = rl * 0.2126729 + gl * 0.7151522 + bl * 0.0721750;
    const double z = rl * 0.0193339 + gl * 0.1191920 + bl * 0.9503041;

    const double xr = x / 0.950456, yr = y / 1.0, zr = z / 1.088754;
    auto f = [](double t) {
        return t > 0.008856 ? std::cbrt(t) : (903.3 * t + 16.0) / 116.0;
    };
    const double fx = f(xr), fy = f(yr), fz = f(zr);
    L = 116.0 * fy - 16.0;
    A = 500.0 * (fx - fy);
    B = 200.0 * (fy - fz);
}

struct Center {
    double l = 0, a = 0, b = 0;
    double y = 0, x = 0;
};

// Merges 4-connected components smaller than min_size into their largest
// adjacent component, then relabels compactly by first appearance.
LabelMap enforce_connectivity(const std::vector<int>& labels, int h, int w, long long min_size) {
    const long long n = static_cast<long long>(h) * w;
    std::vector<int> comp(static_cast<std::size_t>(n), -1);
    std::vector<long long> comp_size;
    const int dy[4] = {1, -1, 0, 0};
    const int dx[4] = {0, 0, 1, -1};

    // flood fill in row-major order
    for (long long start = 0; start < n; ++start) {
        if (comp[static_cast<std::size_t>(start)] >= 0) continue;
        const int id = static_cast<int>(comp_size.size());
        comp_size.push_back(0);
        std::queue<long long> queue;
        queue.push(start);
        comp[static_cast<std::size_t>(start)] = id;
        while (!queue.empty()) {
            const long long p = queue.front();
            queue.pop();
            ++comp_size[static_cast<std::size_t>(id)];
            const int py = static_cast<int>(p / w), px = static_cast<int>(p % w);
            for (int k = 0; k < 4; ++k) {
                const int ny = py + dy[k], nx = px + dx[k];
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                const long long q = static_cast<long long>(ny) * w + nx;
                if (comp[static_cast<std::size_t>(q)] >= 0) continue;
                if (labels[static_cast<std::size_t>(q)] != labels[static_cast<std::size_t>(p)]) continue;
                comp[static_cast<std::size_t>(q)] = id;
                queue.push(q);
            }
        }
    }

    const int num_comp = static_cast<int>(comp_size.size());

    // union-find over components
    std::vector<int> parent(static_cast<std::size_t>(num_comp));
    for (int i = 0; i < num_comp; ++i) parent[static_cast<std::size_t>(i)] = i;
    auto find = [&parent](int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    };

    std::vector<std::set<int>> adj(static_cast<std::size_t>(num_comp));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int c0 = comp[static_cast<std::size_t>(y) * w + x];
            if (x + 1 < w) {
                const int c1 = comp[static_cast<std::size_t>(y) * w + x + 1];
                if (c0 != c1) {
                    adj[static_cast<std::size_t>(c0)].insert(c1);
                    adj[static_cast<std::size_t>(c1)].insert(c0);
                }
            }
            if (y + 1 < h) {
                const int c1 = comp[static_cast<std::size_t>(y + 1) * w + x];
                if (c0 != c1) {
                    adj[static_cast<std::size_t>(c0)].insert(c1);
                    adj[static_cast<std::size_t>(c1)].insert(c0);
                }
            }
        }

    // Iteratively merge the smallest undersized root into its largest neighbor.
    while (true) {
        int victim = -1;
        long long victim_size = std::numeric_limits<long long>::max();
        for (int i = 0; i < num_comp; ++i) {
            if (find(i) != i) continue;
            if (comp_size[static_cast<std::size_t>(i)] < min_size &&
                comp_size[static_cast<std::size_t>(i)] < victim_size) {
                victim = i;
                victim_size = comp_size[static_cast<std::size_t>(i)];
            }
        }
        if (victim < 0) break;

        int best = -1;
        long long best_size = -1;
        std::set<int> roots;
        for (int nb : adj[static_cast<std::size_t>(victim)]) roots.insert(find(nb));
        roots.erase(victim);
        for (int r : roots)
            if (comp_size[static_cast<std::size_t>(r)] > best_size) {
                best = r;
                best_size = comp_size[static_cast<std::size_t>(r)];
            }
        if (best < 0) break; // single component left

        parent[static_cast<std::size_t>(victim)] = best;
        comp_size[static_cast<std::size_t>(best)] += comp_size[static_cast<std::size_t>(victim)];
        comp_size[static_cast<std::size_t>(victim)] = std::numeric_limits<long long>::max(); // retired
        for (int nb : adj[static_cast<std::size_t>(victim)])
            if (find(nb) != best) adj[static_cast<std::size_t>(best)].insert(nb);
    }

    std::vector<long long> merged(static_cast<std::size_t>(n));
    for (long long i = 0; i < n; ++i) merged[static_cast<std::size_t>(i)] = find(comp[static_cast<std::size_t>(i)]);
    return compact_labels(merged, h, w);
}

} // namespace

LabelMap slic_segment(const Image& img, int m_target, double compactness, int iterations) {
    const long long n = img.pixels();
    if (m_target < 1 || m_target > n)
        throw StructuralError("slic_segment: m_target " + std::to_string(m_target) +
                              " outside [1, " + std::to_string(n) + "]");
    if (compactness <= 0) throw StructuralError("slic_segment: compactness must be positive");

    const int h = img.h, w = img.w;
    std::vector<double> lab(static_cast<std::size_t>(n) * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double r = img.at(y, x, 0);
            const double g = img.c > 1 ? img.at(y, x, 1) : r;
            const double b = img.c > 2 ? img.at(y, x, 2) : r;
            double L, A, B;
            rgb_to_lab(r, g, b, L, A, B);
            const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
            lab[i] = L;
            lab[i + 1] = A;
            lab[i + 2] = B;
        }

    const double grid_step = std::sqrt(static_cast<double>(n) / m_target);
    const int ny = std::max(1, static_cast<int>(std::lround(h / grid_step)));
    const int nx = std::max(1, static_cast<int>(std::lround(w / grid_step)));

    std::vector<Center> centers;
    centers.reserve(static_cast<std::size_t>(ny) * nx);
    for (int gy = 0; gy < ny; ++gy)
        for (int gx = 0; gx < nx; ++gx) {
            Center c;
            c.y = (gy + 0.5) * h / ny;
            c.x = (gx + 0.5) * w / nx;
            const int py = std::min(h - 1, static_cast<int>(c.y));
            const int px = std::min(w - 1, static_cast<int>(c.x));
            const std::size_t i = (static_cast<std::size_t>(py) * w + px) * 3;
            c.l = lab[i];
            c.a = lab[i + 1];
            c.b = lab[i + 2];
            centers.push_back(c);
        }

    const double s = grid_step;
    const double spatial_norm = compactness * compactness / (s * s);
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    std::vector<double> dist(static_cast<std::size_t>(n));

    for (int iter = 0; iter < iterations; ++iter) {
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::max());
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const Center& c = centers[k];
            const int y0 = std::max(0, static_cast<int>(std::floor(c.y - s)));
            const int y1 = std::min(h - 1, static_cast<int>(std::ceil(c.y + s)));
            const int x0 = std::max(0, static_cast<int>(std::floor(c.x - s)));
            const int x1 = std::min(w - 1, static_cast<int>(std::ceil(c.x + s)));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const std::size_t p = static_cast<std::size_t>(y) * w + x;
                    const double dl = lab[p * 3] - c.l;
                    const double da = lab[p * 3 + 1] - c.a;
                    const double db = lab[p * 3 + 2] - c.b;
                    const double ds2 = (y - c.y) * (y - c.y) + (x - c.x) * (x - c.x);
                    const double d2 = dl * dl + da * da + db * db + ds2 * spatial_norm;
                    if (d2 < dist[p]) {
                        dist[p] = d2;
                        labels[p] = static_cast<int>(k);
                    }
                }
        }
        // pixels outside every search window fall back to the nearest center
        for (long long p = 0; p < n; ++p) {
            if (dist[static_cast<std::size_t>(p)] != std::numeric_limits<double>::max()) continue;
            const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
            double best = std::numeric_limits<double>::max();
            for (std::size_t k = 0; k < centers.size(); ++k) {
                const double ds2 = (y - centers[k].y) * (y - centers[k].y) +
                                   (x - centers[k].x) * (x - centers[k].x);
                if (ds2 < best) {
                    best = ds2;
                    labels[static_cast<std::size_t>(p)] = static_cast<int>(k);
                }
            }
        }

        std::vector<Center> next(centers.size());
        std::vector<long long> counts(centers.size(), 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * w + x;
                const std::size_t k = static_cast<std::size_t>(labels[p]);
                next[k].l += lab[p * 3];
                next[k].a += lab[p * 3 + 1];
                next[k].b += lab[p * 3 + 2];
                next[k].y += y;
                next[k].x += x;
                ++counts[k];
            }
        for (std::size_t k = 0; k < centers.size(); ++k) {
            if (counts[k] == 0) continue; // keep the old center
            const double inv = 1.0 / static_cast<double>(counts[k]);
            centers[k].l = next[k].l * inv;
            centers[k].a = next[k].a * inv;
            centers[k].b = next[k].b * inv;
            centers[k].y = next[k].y * inv;
            centers[k].x = next[k].x * inv;
        }
    }

    const long long min_size = std::max<long long>(1, static_cast<long long>(s * s / 4.0));
    return enforce_connectivity(labels, h, w, min_size);
}

RegionStats region_stats(const Image& img, const LabelMap& map) {
    if (img.h != map.h || img.w != map.w)
        throw StructuralError("region_stats: image and label map dimensions differ");
    RegionStats st;
    st.sizes.assign(static_cast<std::size_t>(map.regions), 0);
    st.centers.assign(static_cast<std::size_t>(map.regions), {0.0, 0.0});
    st.mean_colors.assign(static_cast<std::size_t>(map.regions), {0.0, 0.0, 0.0});

    for (int y = 0; y < map.h; ++y)
        for (int x = 0; x < map.w; ++x) {
            const int j = map.at(y, x);
            if (j < 0 || j >= map.regions)
                throw StructuralError("region_stats: label outside [0, M)");
            const std::size_t js = static_cast<std::size_t>(j);
            ++st.sizes[js];
            st.centers[js][0] += y;
            st.centers[js][1] += x;
            for (int ch = 0; ch < 3; ++ch)
                st.mean_colors[js][static_cast<std::size_t>(ch)] +=
                    img.at(y, x, std::min(ch, img.c - 1));
        }
    for (int j = 0; j < map.regions; ++j) {
        const std::size_t js = static_cast<std::size_t>(j);
        if (st.sizes[js] == 0) throw StructuralError("region_stats: empty region in label map");
        const double inv = 1.0 / static_cast<double>(st.sizes[js]);
        st.centers[js][0] *= inv;
        st.centers[js][1] *= inv;
        for (double& v : st.mean_colors[js]) v *= inv;
    }
    return st;
}

bool all_regions_connected(const LabelMap& map) {
    std::vector<char> seen_region(static_cast<std::size_t>(map.regions), 0);
    std::vector<char> visited(map.labels.size(), 0);
    const int dy[4] = {1, -1, 0, 0};
    const int dx[4] = {0, 0, 1, -1};
    for (int y = 0; y < map.h; ++y)
        for (int x = 0; x < map.w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * map.w + x;
            if (visited[p]) continue;
            const int label = map.at(y, x);
            if (seen_region[static_cast<std::size_t>(label)]) return false; // second component
            seen_region[static_cast<std::size_t>(label)] = 1;
            std::queue<std::pair<int, int>> queue;
            queue.emplace(y, x);
            visited[p] = 1;
            while (!queue.empty()) {
                auto [cy, cx] = queue.front();
                queue.pop();
                for (int k = 0; k < 4; ++k) {
                    const int nyy = cy + dy[k], nxx = cx + dx[k];
                    if (nyy < 0 || nyy >= map.h || nxx < 0 || nxx >= map.w) continue;
                    const std::size_t q = static_cast<std::size_t>(nyy) * map.w + nxx;
                    if (visited[q] || map.at(nyy, nxx) != label) continue;
                    visited[q] = 1;
                    queue.emplace(nyy, nxx);
                }
            }
        }
    return true;
}

} // namespace spcut
