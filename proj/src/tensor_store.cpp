#include "gtprune/tensor_store.hpp"

#include <fstream>

#include "gtprune/common.hpp"

namespace gtprune {

namespace {

constexpr char kMagic[8] = {'G', 'T', 'P', 'Z', '1', '\n', 0, 0};

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    check(in.good(), "tensor store: truncated file");
    return v;
}

}  // namespace

void TensorStore::put(const std::string& name, Shape shape, std::vector<double> data) {
    check(shape_numel(shape) == data.size(), "tensor store: shape/data mismatch for " + name);
    entries_[name] = Entry{std::move(shape), std::move(data)};
}

const TensorStore::Entry& TensorStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    check(it != entries_.end(), "tensor store: missing entry '" + name + "'");
    return it->second;
}

void TensorStore::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "tensor store: cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint64_t>(out, meta_.size());
    out.write(meta_.data(), static_cast<std::streamsize>(meta_.size()));
    write_pod<std::uint64_t>(out, entries_.size());
    for (const auto& [name, entry] : entries_) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(entry.shape.size()));
        for (std::size_t d : entry.shape) write_pod<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(entry.data.data()),
                  static_cast<std::streamsize>(entry.data.size() * sizeof(double)));
    }
    check(out.good(), "tensor store: write failed for " + path);
}

TensorStore TensorStore::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "tensor store: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    check(in.good() && std::string(magic, 5) == "GTPZ1", "tensor store: bad magic in " + path);

    TensorStore store;
    const auto meta_len = read_pod<std::uint64_t>(in);
    store.meta_.resize(meta_len);
    in.read(store.meta_.data(), static_cast<std::streamsize>(meta_len));
    const auto count = read_pod<std::uint64_t>(in);
    for (std::uint64_t e = 0; e < count; ++e) {
        const auto name_len = read_pod<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto ndim = read_pod<std::uint32_t>(in);
        Shape shape(ndim);
        for (auto& d : shape) d = read_pod<std::uint64_t>(in);
        Entry entry;
        entry.shape = shape;
        entry.data.resize(shape_numel(shape));
        in.read(reinterpret_cast<char*>(entry.data.data()),
                static_cast<std::streamsize>(entry.data.size() * sizeof(double)));
        check(in.good(), "tensor store: truncated entry '" + name + "'");
        store.entries_[name] = std::move(entry);
    }
    return store;
}

}  // namespace gtprune
