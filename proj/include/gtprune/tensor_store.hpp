#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gtprune/tensor.hpp"

namespace gtprune {

// Flat named-tensor container: a JSON metadata header followed by raw f64
// blobs. Used for model checkpoints and activation recordings.
class TensorStore {
public:
    struct Entry {
        Shape shape;
        std::vector<double> data;
    };

    void put(const std::string& name, Shape shape, std::vector<double> data);
    bool has(const std::string& name) const { return entries_.count(name) > 0; }
    const Entry& get(const std::string& name) const;
    const std::map<std::string, Entry>& entries() const { return entries_; }

    std::string& meta() { return meta_; }
    const std::string& meta() const { return meta_; }

    void save(const std::string& path) const;
    static TensorStore load(const std::string& path);

private:
    std::map<std::string, Entry> entries_;
    std::string meta_;
};

}  // namespace gtprune
