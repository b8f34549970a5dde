#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace squeezelab {

/// Malformed configuration: bad syntax, wrong type, unknown or missing key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat key = value configuration. '#' starts a comment; blank lines are
/// ignored; later assignments override earlier ones.
class Config {
public:
    static Config parse(std::istream& in, const std::string& source = "<config>");
    static Config load(const std::string& path);

    /// Applies "key=value"; throws ConfigError without '='.
    void set(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    [[nodiscard]] bool has(const std::string& key) const;
    [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;
    [[nodiscard]] double get_double(const std::string& key, double fallback) const;
    [[nodiscard]] long long get_int(const std::string& key, long long fallback) const;
    [[nodiscard]] std::uint64_t get_uint64(const std::string& key) const;
    [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const;
    /// Comma-separated doubles.
    [[nodiscard]] std::vector<double> get_list(const std::string& key,
                                               const std::vector<double>& fallback) const;

    /// Keys never read by any getter.
    [[nodiscard]] std::vector<std::string> unused_keys() const;

    /// FNV-1a 64 over the sorted "key=value\n" lines, excluding `ignored`.
    [[nodiscard]] std::string hash(const std::set<std::string>& ignored = {}) const;

    [[nodiscard]] const std::map<std::string, std::string>& entries() const { return values_; }

private:
    [[nodiscard]] std::optional<std::string> lookup(const std::string& key) const;

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

/// FNV-1a 64-bit hash as 16 lowercase hex digits.
[[nodiscard]] std::string fnv1a_hex(const std::string& data);

}  // namespace squeezelab
