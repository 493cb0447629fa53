#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffaug/tensor.hpp"

namespace diffaug {

// Checkpoint container: 8-byte magic, u32 header length, JSON header, then a
// little-endian f64 payload. Writing the same arrays with the same header
// fields produces a byte-identical file.
//
// Header fields: format_version, dtype ("f64"), seed, config_hash,
// arrays [{name, shape, offset, count}] with offset in elements from the
// start of the payload, and a free-form meta object.
class CheckpointWriter {
   public:
    void add(const std::string& name, const Shape& shape,
             const std::vector<double>& data);
    void set_meta(const std::string& key, const nlohmann::json& value);

    void write(const std::filesystem::path& path, uint64_t seed,
               const std::string& config_hash) const;

   private:
    struct Entry {
        std::string name;
        Shape shape;
        std::vector<double> data;
    };
    std::vector<Entry> entries_;
    nlohmann::json meta_ = nlohmann::json::object();
};

class Checkpoint {
   public:
    static Checkpoint load(const std::filesystem::path& path);

    bool has(const std::string& name) const;
    const std::vector<double>& array(const std::string& name) const;
    const Shape& shape(const std::string& name) const;
    // Names in the order they appear in the header.
    const std::vector<std::string>& names() const { return order_; }

    uint64_t seed() const { return seed_; }
    const std::string& config_hash() const { return config_hash_; }
    const nlohmann::json& meta() const { return meta_; }
    uint32_t format_version() const { return format_version_; }

   private:
    struct Stored {
        Shape shape;
        std::vector<double> data;
    };
    std::map<std::string, Stored> arrays_;
    std::vector<std::string> order_;
    uint64_t seed_ = 0;
    std::string config_hash_;
    nlohmann::json meta_;
    uint32_t format_version_ = 0;
};

}  // namespace diffaug
