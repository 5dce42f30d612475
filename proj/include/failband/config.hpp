#pragma once

#include "failband/types.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace failband::config {

/// Flat key=value file. '#' starts a comment; blank lines are ignored.
/// Values stay strings until queried; flags override by writing keys on top.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig from_file(const std::string& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key, long fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

/// FNV-1a over the sorted key=value pairs; stable manifest fingerprint.
std::string config_hash(const KeyValueConfig& cfg);

} // namespace failband::config
