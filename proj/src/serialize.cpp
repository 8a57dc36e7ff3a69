#include "stein/serialize.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace stein::model {

namespace {

constexpr char kMagic[6] = {'S', 'T', 'E', 'I', 'N', '1'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("weights file truncated");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw DataError("weights file truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

void put_f32(std::ostream& os, float f) {
    uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(os, u);
}

float get_f32(std::istream& is) {
    const uint32_t u = get_u32(is);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

}  // namespace

void save_weights(const std::string& path, const std::vector<WeightEntry>& entries) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    put_u32(os, static_cast<uint32_t>(entries.size()));
    uint64_t offset = 0;  // bytes into the payload
    for (const auto& e : entries) {
        put_u32(os, static_cast<uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u32(os, static_cast<uint32_t>(e.shape.size()));
        for (int64_t d : e.shape) put_u32(os, static_cast<uint32_t>(d));
        put_u64(os, offset);
        if (shape_numel(e.shape) != static_cast<int64_t>(e.values.size()))
            throw UsageError("save_weights: entry '" + e.name + "' shape/value mismatch");
        offset += e.values.size() * 4;
    }
    put_u64(os, offset);
    for (const auto& e : entries)
        for (double v : e.values) put_f32(os, static_cast<float>(v));
    if (!os) throw DataError("failed writing '" + path + "'");
}

std::vector<WeightEntry> load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open weights file '" + path + "'");
    char magic[6];
    is.read(magic, 6);
    if (!is || std::memcmp(magic, kMagic, 6) != 0)
        throw DataError("'" + path + "' is not a STEIN1 weights file");
    const uint32_t count = get_u32(is);
    struct Rec {
        std::string name;
        Shape shape;
        uint64_t offset;
    };
    std::vector<Rec> recs(count);
    for (auto& r : recs) {
        const uint32_t name_len = get_u32(is);
        r.name.resize(name_len);
        is.read(r.name.data(), name_len);
        const uint32_t ndim = get_u32(is);
        r.shape.resize(ndim);
        for (uint32_t i = 0; i < ndim; ++i) r.shape[i] = get_u32(is);
        r.offset = get_u64(is);
        if (!is) throw DataError("weights file truncated in manifest");
    }
    const uint64_t payload = get_u64(is);
    std::vector<WeightEntry> entries;
    entries.reserve(count);
    uint64_t consumed = 0;
    for (const auto& r : recs) {
        if (r.offset != consumed)
            throw DataError("weights file '" + path + "': non-contiguous payload");
        WeightEntry e;
        e.name = r.name;
        e.shape = r.shape;
        const int64_t n = shape_numel(r.shape);
        e.values.resize(n);
        for (int64_t i = 0; i < n; ++i) e.values[i] = static_cast<double>(get_f32(is));
        consumed += static_cast<uint64_t>(n) * 4;
        entries.push_back(std::move(e));
    }
    if (consumed != payload) throw DataError("weights file '" + path + "': payload size mismatch");
    return entries;
}

void save_model(const std::string& path, SteinFormer& model,
                const std::vector<WeightEntry>& extra) {
    std::vector<WeightEntry> entries;
    for (const auto& p : model.parameters())
        entries.push_back({p.name, p.tensor.shape(), p.tensor.data()});
    for (const auto& b : model.buffers())
        entries.push_back({b.name, {static_cast<int64_t>(b.values->size())}, *b.values});
    for (const auto& e : extra) entries.push_back(e);
    save_weights(path, entries);
}

std::vector<WeightEntry> load_model(const std::string& path, SteinFormer& model) {
    auto entries = load_weights(path);
    std::map<std::string, WeightEntry*> by_name;
    for (auto& e : entries) by_name[e.name] = &e;

    auto take = [&](const std::string& name, const Shape& shape) -> WeightEntry* {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw DataError("weights file '" + path + "' is missing tensor '" + name + "'");
        WeightEntry* e = it->second;
        if (e->shape != shape)
            throw DataError("tensor '" + name + "' has shape " + shape_str(e->shape) +
                            ", model expects " + shape_str(shape));
        by_name.erase(it);
        return e;
    };

    for (auto& p : model.parameters()) {
        WeightEntry* e = take(p.name, p.tensor.shape());
        p.tensor.mutable_data() = e->values;
    }
    for (auto& b : model.buffers()) {
        WeightEntry* e = take(b.name, {static_cast<int64_t>(b.values->size())});
        *b.values = e->values;
    }

    std::vector<WeightEntry> leftovers;
    for (auto& e : entries)
        if (by_name.count(e.name)) leftovers.push_back(std::move(e));
    return leftovers;
}

}  // namespace stein::model
