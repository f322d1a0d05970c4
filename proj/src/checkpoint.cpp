#include "spcut/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "spcut/errors.hpp"
#include "spcut/image.hpp" // atomic_write

namespace spcut {

namespace {

constexpr const char* kMagic = "SPCKPT 1";

void append_le64(std::string& out, double value) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_le64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

} // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw ParseError("checkpoint has no tensor named '" + name + "'");
}

const std::string& Checkpoint::meta_value(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParseError("checkpoint has no meta key '" + key + "'");
    return it->second;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::ostringstream header;
    header << kMagic << "\n";
    for (const auto& [k, v] : ck.meta) header << "meta " << k << " " << v << "\n";
    std::size_t offset = 0;
    for (const auto& [name, t] : ck.tensors) {
        header << "tensor " << name << " " << t.dim();
        for (int d = 0; d < t.dim(); ++d) header << " " << t.size(d);
        header << " " << offset << "\n";
        offset += static_cast<std::size_t>(t.numel()) * 8;
    }
    header << "data\n";

    std::string blob = header.str();
    blob.reserve(blob.size() + offset);
    for (const auto& [name, t] : ck.tensors)
        for (long long i = 0; i < t.numel(); ++i) append_le64(blob, t[i]);
    atomic_write(path, blob);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string() + ": cannot open checkpoint");
    std::string raw(std::istreambuf_iterator<char>(in), {});

    // Header ends at the "data\n" marker line.
    std::size_t line_start = 0;
    bool first = true;
    Checkpoint ck;
    struct Entry {
        std::string name;
        std::vector<int> shape;
        std::size_t offset;
    };
    std::vector<Entry> entries;
    std::size_t data_start = std::string::npos;

    while (line_start < raw.size()) {
        const std::size_t nl = raw.find('\n', line_start);
        if (nl == std::string::npos)
            throw ParseError(path.string() + ": truncated header at byte offset " +
                             std::to_string(line_start));
        const std::string line = raw.substr(line_start, nl - line_start);
        if (first) {
            if (line != kMagic)
                throw ParseError(path.string() + ": bad checkpoint magic at byte offset 0");
            first = false;
        } else if (line == "data") {
            data_start = nl + 1;
            break;
        } else {
            std::istringstream ls(line);
            std::string tag;
            ls >> tag;
            if (tag == "meta") {
                std::string key, value;
                ls >> key;
                std::getline(ls, value);
                if (!value.empty() && value.front() == ' ') value.erase(0, 1);
                ck.meta[key] = value;
            } else if (tag == "tensor") {
                Entry e;
                int nd = 0;
                ls >> e.name >> nd;
                e.shape.resize(static_cast<std::size_t>(nd));
                for (int d = 0; d < nd; ++d) ls >> e.shape[static_cast<std::size_t>(d)];
                ls >> e.offset;
                if (!ls)
                    throw ParseError(path.string() + ": malformed tensor line at byte offset " +
                                     std::to_string(line_start));
                entries.push_back(std::move(e));
            } else {
                throw ParseError(path.string() + ": unknown header tag '" + tag +
                                 "' at byte offset " + std::to_string(line_start));
            }
        }
        line_start = nl + 1;
    }
    if (data_start == std::string::npos)
        throw ParseError(path.string() + ": missing data marker");

    for (const Entry& e : entries) {
        Tensor t(e.shape);
        const std::size_t need = data_start + e.offset + static_cast<std::size_t>(t.numel()) * 8;
        if (need > raw.size())
            throw ParseError(path.string() + ": tensor '" + e.name +
                             "' extends past end of file at byte offset " + std::to_string(raw.size()));
        const unsigned char* p =
            reinterpret_cast<const unsigned char*>(raw.data()) + data_start + e.offset;
        for (long long i = 0; i < t.numel(); ++i) t[i] = read_le64(p + i * 8);
        ck.tensors.emplace_back(e.name, std::move(t));
    }
    return ck;
}

} // namespace spcut
