#include "spcut/image.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "spcut/errors.hpp"

namespace spcut {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// label compaction
// ---------------------------------------------------------------------------

LabelMap compact_labels(const std::vector<long long>& raw, int h, int w) {
    if (static_cast<long long>(raw.size()) != static_cast<long long>(h) * w)
        throw StructuralError("compact_labels: value count does not match dimensions");
    LabelMap map(h, w);
    std::unordered_map<long long, int> remap;
    remap.reserve(64);
    int next = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        auto it = remap.find(raw[i]);
        if (it == remap.end()) it = remap.emplace(raw[i], next++).first;
        map.labels[i] = it->second;
    }
    map.regions = next;
    return map;
}

void recompact(LabelMap& map) {
    std::vector<long long> raw(map.labels.begin(), map.labels.end());
    map = compact_labels(raw, map.h, map.w);
}

// ---------------------------------------------------------------------------
// tensor conversion
// ---------------------------------------------------------------------------

Tensor image_to_tensor(const Image& img) {
    Tensor t({1, img.c, img.h, img.w});
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) t.at(0, ch, y, x) = img.at(y, x, ch);
    return t;
}

Image tensor_to_image(const Tensor& t, int batch_index) {
    if (t.dim() != 4) throw StructuralError("tensor_to_image: tensor must be 4-D");
    Image img(t.size(2), t.size(3), t.size(1));
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) img.at(y, x, ch) = t.at(batch_index, ch, y, x);
    return img;
}

// ---------------------------------------------------------------------------
// netpbm parsing
// ---------------------------------------------------------------------------

namespace {

struct ByteReader {
    std::vector<unsigned char> buf;
    std::size_t pos = 0;
    std::string origin;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(origin + ": " + msg + " at byte offset " + std::to_string(pos));
    }

    bool eof() const { return pos >= buf.size(); }

    unsigned char next() {
        if (eof()) fail("unexpected end of file");
        return buf[pos++];
    }

    // Skips whitespace and '#' comments between header tokens.
    void skip_separators() {
        while (!eof()) {
            const unsigned char ch = buf[pos];
            if (ch == '#') {
                while (!eof() && buf[pos] != '\n') ++pos;
            } else if (std::isspace(ch)) {
                ++pos;
            } else {
                break;
            }
        }
    }

    long long read_int() {
        skip_separators();
        if (eof()) fail("unexpected end of file while reading header integer");
        if (!std::isdigit(buf[pos])) fail("expected digit");
        long long value = 0;
        while (!eof() && std::isdigit(buf[pos])) {
            value = value * 10 + (buf[pos] - '0');
            if (value > (1LL << 40)) fail("header integer out of range");
            ++pos;
        }
        return value;
    }
};

ByteReader load_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string() + ": cannot open file");
    ByteReader r;
    r.origin = path.string();
    r.buf.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
}

struct PnmHeader {
    char kind; // '5' or '6'
    int w, h;
    long long maxval;
};

PnmHeader read_pnm_header(ByteReader& r) {
    if (r.next() != 'P') r.fail("missing PNM magic");
    const unsigned char kind = r.next();
    if (kind != '5' && kind != '6') r.fail("unsupported PNM type (want P5 or P6)");
    PnmHeader hd;
    hd.kind = static_cast<char>(kind);
    hd.w = static_cast<int>(r.read_int());
    hd.h = static_cast<int>(r.read_int());
    hd.maxval = r.read_int();
    if (hd.w <= 0 || hd.h <= 0) r.fail("non-positive image dimensions");
    if (hd.maxval <= 0 || hd.maxval > 65535) r.fail("maxval out of range");
    // Exactly one whitespace byte separates the header from the raster.
    if (r.eof() || !std::isspace(r.buf[r.pos])) r.fail("missing raster separator");
    ++r.pos;
    return hd;
}

long long read_sample(ByteReader& r, bool two_byte) {
    if (two_byte) {
        const long long hi = r.next();
        const long long lo = r.next();
        return hi * 256 + lo; // big-endian per netpbm
    }
    return r.next();
}

std::string u16be(unsigned v) {
    std::string s(2, '\0');
    s[0] = static_cast<char>((v >> 8) & 0xff);
    s[1] = static_cast<char>(v & 0xff);
    return s;
}

} // namespace

Image read_image(const fs::path& path) {
    ByteReader r = load_file(path);
    const PnmHeader hd = read_pnm_header(r);
    const int channels = hd.kind == '6' ? 3 : 1;
    const bool two_byte = hd.maxval > 255;
    Image img(hd.h, hd.w, channels);
    const double scale = 1.0 / static_cast<double>(hd.maxval);
    for (int y = 0; y < hd.h; ++y)
        for (int x = 0; x < hd.w; ++x)
            for (int ch = 0; ch < channels; ++ch)
                img.at(y, x, ch) = static_cast<double>(read_sample(r, two_byte)) * scale;
    return img;
}

void write_image_ppm(const fs::path& path, const Image& img) {
    std::ostringstream os;
    os << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::string body;
    body.reserve(static_cast<std::size_t>(img.pixels()) * 3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                const double v = img.c == 3 ? img.at(y, x, ch) : img.at(y, x, 0);
                const double clamped = std::min(1.0, std::max(0.0, v));
                body.push_back(static_cast<char>(static_cast<int>(std::lround(clamped * 255.0))));
            }
    atomic_write(path, os.str() + body);
}

LabelMap read_label_map(const fs::path& path) {
    if (path.extension() == ".csv") {
        std::ifstream in(path);
        if (!in) throw ParseError(path.string() + ": cannot open file");
        std::vector<long long> raw;
        std::string line;
        int w = -1, h = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<long long> row;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) {
                try {
                    row.push_back(std::stoll(cell));
                } catch (const std::exception&) {
                    throw ParseError(path.string() + ": invalid integer '" + cell + "' in row " +
                                     std::to_string(h + 1));
                }
            }
            if (w < 0) w = static_cast<int>(row.size());
            else if (static_cast<int>(row.size()) != w)
                throw StructuralError(path.string() + ": non-rectangular CSV at row " +
                                      std::to_string(h + 1));
            raw.insert(raw.end(), row.begin(), row.end());
            ++h;
        }
        if (h == 0 || w <= 0) throw ParseError(path.string() + ": empty CSV label map");
        return compact_labels(raw, h, w);
    }

    ByteReader r = load_file(path);
    const PnmHeader hd = read_pnm_header(r);
    if (hd.kind != '5') r.fail("label maps must be P5");
    const bool two_byte = hd.maxval > 255;
    std::vector<long long> raw;
    raw.reserve(static_cast<std::size_t>(hd.w) * hd.h);
    for (long long i = 0; i < static_cast<long long>(hd.w) * hd.h; ++i)
        raw.push_back(read_sample(r, two_byte));
    return compact_labels(raw, hd.h, hd.w);
}

void write_label_map(const fs::path& path, const LabelMap& map) {
    if (map.regions > 65536)
        throw StructuralError("write_label_map: more than 65536 regions cannot be stored");
    std::ostringstream os;
    os << "P5\n" << map.w << " " << map.h << "\n65535\n";
    std::string body;
    body.reserve(static_cast<std::size_t>(map.pixels()) * 2);
    for (int v : map.labels) body += u16be(static_cast<unsigned>(v));
    atomic_write(path, os.str() + body);
}

Image overlay_boundaries(const Image& img, const LabelMap& map) {
    if (img.h != map.h || img.w != map.w)
        throw StructuralError("overlay_boundaries: image and label map dimensions differ");
    Image out(img.h, img.w, 3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                out.at(y, x, ch) = img.c == 3 ? img.at(y, x, ch) : img.at(y, x, 0);

    const int dy[4] = {1, -1, 0, 0};
    const int dx[4] = {0, 0, 1, -1};
    for (int y = 0; y < map.h; ++y)
        for (int x = 0; x < map.w; ++x) {
            bool boundary = false;
            for (int k = 0; k < 4 && !boundary; ++k) {
                const int ny = y + dy[k], nx = x + dx[k];
                if (ny < 0 || ny >= map.h || nx < 0 || nx >= map.w) continue;
                boundary = map.at(ny, nx) != map.at(y, x);
            }
            if (boundary) {
                out.at(y, x, 0) = 1.0;
                out.at(y, x, 1) = 0.0;
                out.at(y, x, 2) = 0.0;
            }
        }
    return out;
}

void atomic_write(const fs::path& path, const std::string& bytes) {
    static std::atomic<unsigned> counter{0};
    const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    const fs::path tmp =
        dir / (path.filename().string() + ".tmp" + std::to_string(counter.fetch_add(1)));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ParseError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ParseError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// geometry helpers
// ---------------------------------------------------------------------------

Image crop(const Image& img, int y0, int x0, int ch, int cw) {
    if (y0 < 0 || x0 < 0 || y0 + ch > img.h || x0 + cw > img.w)
        throw StructuralError("crop: window outside image");
    Image out(ch, cw, img.c);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
            for (int k = 0; k < img.c; ++k) out.at(y, x, k) = img.at(y0 + y, x0 + x, k);
    return out;
}

Image flip_horizontal(const Image& img) {
    Image out(img.h, img.w, img.c);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int k = 0; k < img.c; ++k) out.at(y, x, k) = img.at(y, img.w - 1 - x, k);
    return out;
}

LabelMap crop(const LabelMap& map, int y0, int x0, int ch, int cw) {
    if (y0 < 0 || x0 < 0 || y0 + ch > map.h || x0 + cw > map.w)
        throw StructuralError("crop: window outside label map");
    std::vector<long long> raw;
    raw.reserve(static_cast<std::size_t>(ch) * cw);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) raw.push_back(map.at(y0 + y, x0 + x));
    return compact_labels(raw, ch, cw);
}

LabelMap flip_horizontal(const LabelMap& map) {
    std::vector<long long> raw;
    raw.reserve(map.labels.size());
    for (int y = 0; y < map.h; ++y)
        for (int x = 0; x < map.w; ++x) raw.push_back(map.at(y, map.w - 1 - x));
    return compact_labels(raw, map.h, map.w);
}

} // namespace spcut
