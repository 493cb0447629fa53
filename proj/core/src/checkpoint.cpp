#include "diffaug/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "diffaug/errors.hpp"
#include "diffaug/util.hpp"

namespace diffaug {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'C', 'K', 'P', 'T', '0', '1'};
constexpr uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

}  // namespace

void CheckpointWriter::add(const std::string& name, const Shape& shape,
                           const std::vector<double>& data) {
    if (shape_size(shape) != data.size()) {
        throw ContractError("checkpoint array " + name + ": shape " +
                            shape_str(shape) + " does not match " +
                            std::to_string(data.size()) + " elements");
    }
    for (const auto& e : entries_) {
        if (e.name == name) {
            throw ContractError("checkpoint array " + name + " added twice");
        }
    }
    entries_.push_back({name, shape, data});
}

void CheckpointWriter::set_meta(const std::string& key,
                                const nlohmann::json& value) {
    meta_[key] = value;
}

void CheckpointWriter::write(const std::filesystem::path& path, uint64_t seed,
                             const std::string& config_hash) const {
    nlohmann::json header;
    header["format_version"] = kFormatVersion;
    header["dtype"] = "f64";
    header["seed"] = seed;
    header["config_hash"] = config_hash;
    header["meta"] = meta_;
    nlohmann::json arrays = nlohmann::json::array();
    size_t offset = 0;
    for (const auto& e : entries_) {
        nlohmann::json a;
        a["name"] = e.name;
        a["shape"] = e.shape;
        a["offset"] = offset;
        a["count"] = e.data.size();
        arrays.push_back(a);
        offset += e.data.size();
    }
    header["arrays"] = arrays;

    std::string hjson = header.dump();
    std::vector<uint8_t> buf;
    buf.reserve(12 + hjson.size() + offset * sizeof(double));
    buf.insert(buf.end(), kMagic, kMagic + 8);
    auto hlen = static_cast<uint32_t>(hjson.size());
    const auto* hp = reinterpret_cast<const uint8_t*>(&hlen);
    buf.insert(buf.end(), hp, hp + 4);
    buf.insert(buf.end(), hjson.begin(), hjson.end());
    for (const auto& e : entries_) {
        const auto* dp = reinterpret_cast<const uint8_t*>(e.data.data());
        buf.insert(buf.end(), dp, dp + e.data.size() * sizeof(double));
    }
    write_binary_file(path, buf.data(), buf.size());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::vector<uint8_t> buf = read_binary_file(path);
    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 8) != 0) {
        throw FormatError(path.string() + ": not a checkpoint file");
    }
    uint32_t hlen;
    std::memcpy(&hlen, buf.data() + 8, 4);
    if (12 + static_cast<size_t>(hlen) > buf.size()) {
        throw FormatError(path.string() + ": truncated header");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.begin() + 12,
                                       buf.begin() + 12 + hlen);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": bad header: " + e.what());
    }

    Checkpoint cp;
    try {
        cp.format_version_ = header.at("format_version").get<uint32_t>();
        if (cp.format_version_ != kFormatVersion) {
            throw FormatError(path.string() + ": unsupported format version " +
                              std::to_string(cp.format_version_));
        }
        if (header.at("dtype").get<std::string>() != "f64") {
            throw FormatError(path.string() + ": unsupported dtype");
        }
        cp.seed_ = header.at("seed").get<uint64_t>();
        cp.config_hash_ = header.at("config_hash").get<std::string>();
        cp.meta_ = header.value("meta", nlohmann::json::object());

        size_t payload_off = 12 + hlen;
        size_t payload_count = (buf.size() - payload_off) / sizeof(double);
        if ((buf.size() - payload_off) % sizeof(double) != 0) {
            throw FormatError(path.string() + ": payload not a multiple of 8");
        }
        size_t expected = 0;
        for (const auto& a : header.at("arrays")) {
            std::string name = a.at("name").get<std::string>();
            Shape shape = a.at("shape").get<Shape>();
            size_t offset = a.at("offset").get<size_t>();
            size_t count = a.at("count").get<size_t>();
            if (shape_size(shape) != count) {
                throw FormatError(path.string() + ": array " + name +
                                  " count does not match shape");
            }
            if (offset + count > payload_count) {
                throw FormatError(path.string() + ": array " + name +
                                  " exceeds payload");
            }
            if (cp.arrays_.count(name)) {
                throw FormatError(path.string() + ": duplicate array " + name);
            }
            Stored s;
            s.shape = std::move(shape);
            s.data.resize(count);
            std::memcpy(s.data.data(),
                        buf.data() + payload_off + offset * sizeof(double),
                        count * sizeof(double));
            cp.arrays_.emplace(name, std::move(s));
            cp.order_.push_back(name);
            expected += count;
        }
        if (expected != payload_count) {
            throw FormatError(path.string() + ": payload size " +
                              std::to_string(payload_count) +
                              " does not match declared arrays (" +
                              std::to_string(expected) + ")");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": bad header: " + e.what());
    }
    return cp;
}

bool Checkpoint::has(const std::string& name) const {
    return arrays_.count(name) > 0;
}

const std::vector<double>& Checkpoint::array(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) {
        throw FormatError("checkpoint has no array named " + name);
    }
    return it->second.data;
}

const Shape& Checkpoint::shape(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) {
        throw FormatError("checkpoint has no array named " + name);
    }
    return it->second.shape;
}

}  // namespace diffaug
